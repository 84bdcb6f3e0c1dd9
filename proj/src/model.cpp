#include "navar/model.hpp"

#include "navar/common.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace navar {

double eval_contribution(const NetView& net, double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("eval_contribution: non-finite input");
    double out = 0.0;
    for (std::size_t k = 0; k < net.w1.size(); ++k) {
        const double pre = net.w1[k] * x + net.b1[k];
        if (pre > 0.0) out += net.w2[k] * pre;
    }
    return out + net.b2;
}

NavarParams NavarParams::zeros(std::size_t nets, std::size_t hidden, std::size_t targets) {
    NavarParams p;
    p.w1.assign(nets * hidden, 0.0);
    p.b1.assign(nets * hidden, 0.0);
    p.w2.assign(nets * hidden, 0.0);
    p.b2.assign(nets, 0.0);
    p.target_bias.assign(targets, 0.0);
    return p;
}

double& NavarParams::flat(std::size_t k) {
    for (auto* block : {&w1, &b1, &w2, &b2, &target_bias}) {
        if (k < block->size()) return (*block)[k];
        k -= block->size();
    }
    throw std::out_of_range("NavarParams::flat: index out of range");
}

double NavarParams::flat(std::size_t k) const {
    return const_cast<NavarParams&>(*this).flat(k);
}

NavarModel::NavarModel(std::size_t num_vars, std::size_t lags, std::size_t hidden,
                       std::vector<std::string> variables, NormalizationStats norm_stats)
    : num_vars_(num_vars),
      lags_(lags),
      hidden_(hidden),
      variables_(std::move(variables)),
      norm_stats_(std::move(norm_stats)),
      params_(NavarParams::zeros(num_vars * num_vars * lags, hidden, num_vars)) {
    if (num_vars < 1 || lags < 1 || hidden < 1) {
        throw ConfigError("NavarModel: num_vars, lags and hidden must all be positive");
    }
    if (variables_.size() != num_vars) {
        throw ConfigError("NavarModel: variable name count does not match num_vars");
    }
}

NetView NavarModel::net(std::size_t index) const noexcept {
    const std::size_t off = index * hidden_;
    return {std::span<const double>(params_.w1).subspan(off, hidden_),
            std::span<const double>(params_.b1).subspan(off, hidden_),
            std::span<const double>(params_.w2).subspan(off, hidden_), params_.b2[index]};
}

void NavarModel::validate() const {
    const std::size_t nets = num_nets();
    if (params_.w1.size() != nets * hidden_ || params_.b1.size() != nets * hidden_ ||
        params_.w2.size() != nets * hidden_ || params_.b2.size() != nets ||
        params_.target_bias.size() != num_vars_) {
        throw DataError("NavarModel: parameter arrays do not match (N, p, H)");
    }
    for (std::size_t k = 0; k < params_.size(); ++k) {
        if (!std::isfinite(params_.flat(k))) throw DataError("NavarModel: non-finite parameter");
    }
    if (norm_stats_.mean.size() != num_vars_ || norm_stats_.std.size() != num_vars_) {
        throw DataError("NavarModel: normalization stats do not match num_vars");
    }
}

namespace {

void check_window(const NavarModel& model, const LagWindow& window) {
    if (window.num_vars != model.num_vars() || window.lags != model.lags() ||
        window.lagged.size() != model.num_vars() * model.lags()) {
        throw std::invalid_argument("predict: window shape (N=" + std::to_string(window.num_vars) +
                                    ", p=" + std::to_string(window.lags) +
                                    ") does not match model (N=" + std::to_string(model.num_vars()) +
                                    ", p=" + std::to_string(model.lags()) + ")");
    }
}

double target_sum(const NavarModel& model, const LagWindow& window, std::size_t target,
                  const std::optional<EdgeMask>& mask) {
    double y = model.params().target_bias[target];
    for (std::size_t j = 0; j < model.num_vars(); ++j) {
        if (mask && mask->target == target && mask->source == j) continue;
        for (std::size_t l = 1; l <= model.lags(); ++l) {
            y += eval_contribution(model.net(target, j, l), window.input(j, l));
        }
    }
    return y;
}

}  // namespace

std::vector<double> predict(const NavarModel& model, const LagWindow& window,
                            const std::optional<EdgeMask>& mask) {
    check_window(model, window);
    std::vector<double> out(model.num_vars());
    for (std::size_t i = 0; i < model.num_vars(); ++i) out[i] = target_sum(model, window, i, mask);
    return out;
}

double predict_target(const NavarModel& model, const LagWindow& window, std::size_t target,
                      const std::optional<EdgeMask>& mask) {
    check_window(model, window);
    if (target >= model.num_vars()) throw std::invalid_argument("predict_target: target out of range");
    return target_sum(model, window, target, mask);
}

ContributionTable contribution_series(const NavarModel& model, std::span<const LagWindow> windows,
                                      std::size_t target) {
    if (windows.empty()) throw std::invalid_argument("contribution_series: no windows");
    if (target >= model.num_vars()) throw std::invalid_argument("contribution_series: bad target");
    const std::size_t n = model.num_vars();
    const std::size_t p = model.lags();
    ContributionTable table;
    table.target = target;
    table.num_vars = n;
    table.lags = p;
    table.bias = model.params().target_bias[target];
    table.values.resize(windows.size() * n * p);
    for (std::size_t w = 0; w < windows.size(); ++w) {
        check_window(model, windows[w]);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t l = 1; l <= p; ++l) {
                table.values[(w * n + j) * p + (l - 1)] =
                    eval_contribution(model.net(target, j, l), windows[w].input(j, l));
            }
        }
    }
    return table;
}

std::string to_string(ScoreStatistic s) { return s == ScoreStatistic::Variance ? "variance" : "std"; }
std::string to_string(DiagonalPolicy d) { return d == DiagonalPolicy::Raw ? "raw" : "zeroed"; }

ScoreStatistic parse_score_statistic(const std::string& s) {
    if (s == "variance" || s == "var") return ScoreStatistic::Variance;
    if (s == "std") return ScoreStatistic::Std;
    throw ConfigError("unknown score statistic '" + s + "' (expected variance|std)");
}

DiagonalPolicy parse_diagonal_policy(const std::string& s) {
    if (s == "raw") return DiagonalPolicy::Raw;
    if (s == "zeroed" || s == "zero") return DiagonalPolicy::Zeroed;
    throw ConfigError("unknown diagonal policy '" + s + "' (expected raw|zeroed)");
}

CausalScoreMatrix causal_scores(const NavarModel& model, std::span<const LagWindow> windows,
                                ScoreStatistic statistic, DiagonalPolicy diagonal) {
    if (windows.size() < 2) throw std::invalid_argument("causal_scores: need at least 2 windows");
    for (const auto& w : windows) check_window(model, w);
    const std::size_t n = model.num_vars();
    const std::size_t p = model.lags();
    const long nets = static_cast<long>(model.num_nets());
    const double count = static_cast<double>(windows.size());

    std::vector<double> per_net(model.num_nets(), 0.0);
#pragma omp parallel for schedule(static)
    for (long idx = 0; idx < nets; ++idx) {
        const std::size_t net = static_cast<std::size_t>(idx);
        const std::size_t source = (net / p) % n;
        const std::size_t lag = net % p + 1;
        const NetView view = model.net(net);
        std::vector<double> vals(windows.size());
        double sum = 0.0;
        for (std::size_t w = 0; w < windows.size(); ++w) {
            vals[w] = eval_contribution(view, windows[w].input(source, lag));
            sum += vals[w];
        }
        const double mean = sum / count;
        double ss = 0.0;
        for (double v : vals) ss += (v - mean) * (v - mean);
        const double var = ss / count;
        per_net[net] = statistic == ScoreStatistic::Variance ? var : std::sqrt(var);
    }

    CausalScoreMatrix out;
    out.num_vars = n;
    out.statistic = statistic;
    out.diagonal = diagonal;
    out.scores.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (diagonal == DiagonalPolicy::Zeroed && i == j) continue;
            double s = 0.0;
            for (std::size_t l = 1; l <= p; ++l) s += per_net[model.net_index(i, j, l)];
            out.scores[i * n + j] = s;
        }
    }
    return out;
}

nlohmann::json model_to_json(const NavarModel& model) {
    const auto& prm = model.params();
    nlohmann::json j;
    j["format"] = "navar-checkpoint";
    j["version"] = kCheckpointVersion;
    j["num_vars"] = model.num_vars();
    j["lags"] = model.lags();
    j["hidden"] = model.hidden();
    j["variables"] = model.variables();
    j["net_layout"] = "net=(target*N+source)*p+(lag-1); hidden unit k at net*H+k";
    j["target_bias"] = prm.target_bias;
    j["w1"] = prm.w1;
    j["b1"] = prm.b1;
    j["w2"] = prm.w2;
    j["b2"] = prm.b2;
    j["norm_stats"] = stats_to_json(model.norm_stats());
    return j;
}

NavarModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "navar-checkpoint") {
            throw DataError("checkpoint: unexpected format tag");
        }
        const int version = j.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw DataError("checkpoint: unsupported version " + std::to_string(version));
        }
        NavarModel model(j.at("num_vars").get<std::size_t>(), j.at("lags").get<std::size_t>(),
                         j.at("hidden").get<std::size_t>(),
                         j.at("variables").get<std::vector<std::string>>(),
                         stats_from_json(j.at("norm_stats")));
        auto& prm = model.params();
        prm.target_bias = j.at("target_bias").get<std::vector<double>>();
        prm.w1 = j.at("w1").get<std::vector<double>>();
        prm.b1 = j.at("b1").get<std::vector<double>>();
        prm.w2 = j.at("w2").get<std::vector<double>>();
        prm.b2 = j.at("b2").get<std::vector<double>>();
        model.validate();
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    }
}

std::string serialize_model(const NavarModel& model) { return model_to_json(model).dump() + "\n"; }

void save_model(const std::filesystem::path& path, const NavarModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot write '" + path.string() + "'");
    out << serialize_model(model);
}

NavarModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint '" + path.string() + "': " + e.what());
    }
    return model_from_json(j);
}

std::string scores_to_csv(const CausalScoreMatrix& s, const std::vector<std::string>& variables) {
    std::string out = "target";
    for (const auto& v : variables) out += "," + v;
    out += "\n";
    for (std::size_t i = 0; i < s.num_vars; ++i) {
        out += variables[i];
        for (std::size_t j = 0; j < s.num_vars; ++j) out += "," + format_double(s.at(i, j));
        out += "\n";
    }
    return out;
}

nlohmann::json scores_to_json(const CausalScoreMatrix& s, const std::vector<std::string>& variables) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < s.num_vars; ++i) {
        std::vector<double> r(s.scores.begin() + static_cast<long>(i * s.num_vars),
                              s.scores.begin() + static_cast<long>((i + 1) * s.num_vars));
        rows.push_back(r);
    }
    return {{"variables", variables},
            {"orientation", "scores[target][source]"},
            {"statistic", to_string(s.statistic)},
            {"diagonal", to_string(s.diagonal)},
            {"scores", rows}};
}

}  // namespace navar
