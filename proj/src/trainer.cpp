#include "navar/trainer.hpp"

#include "navar/common.hpp"
#include "navar/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace navar {

void TrainConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("train config: ") + what);
    };
    require(lags >= 1, "lags must be >= 1");
    require(hidden >= 1, "hidden must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
    require(weight_decay >= 0.0, "weight_decay must be >= 0");
    require(lambda_sparsity >= 0.0, "lambda_sparsity must be >= 0");
    require(beta1 >= 0.0 && beta1 < 1.0, "beta1 must be in [0, 1)");
    require(beta2 >= 0.0 && beta2 < 1.0, "beta2 must be in [0, 1)");
    require(adam_eps > 0.0, "adam_eps must be > 0");
    require(learning_rate > 0.0, "learning_rate must be > 0");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(epochs >= 1, "epochs must be >= 1");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {{"lags", c.lags},
            {"hidden", c.hidden},
            {"dropout", c.dropout},
            {"weight_decay", c.weight_decay},
            {"lambda_sparsity", c.lambda_sparsity},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_eps", c.adam_eps},
            {"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    if (!j.is_object()) throw ConfigError("train config: expected a JSON object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "lags") c.lags = value.get<std::size_t>();
            else if (key == "hidden") c.hidden = value.get<std::size_t>();
            else if (key == "dropout") c.dropout = value.get<double>();
            else if (key == "weight_decay") c.weight_decay = value.get<double>();
            else if (key == "lambda_sparsity") c.lambda_sparsity = value.get<double>();
            else if (key == "beta1") c.beta1 = value.get<double>();
            else if (key == "beta2") c.beta2 = value.get<double>();
            else if (key == "adam_eps") c.adam_eps = value.get<double>();
            else if (key == "learning_rate") c.learning_rate = value.get<double>();
            else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
            else if (key == "epochs") c.epochs = value.get<std::size_t>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else throw ConfigError("train config: unknown key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string loss_reports_csv(std::span<const LossReport> reports) {
    std::string out = "epoch,train_mse,sparsity,total\n";
    for (const auto& r : reports) {
        out += std::to_string(r.epoch) + "," + format_double(r.train_mse) + "," +
               format_double(r.sparsity_term) + "," + format_double(r.total_loss) + "\n";
    }
    return out;
}

NavarModel init_model(const TrainConfig& config, std::size_t num_vars, std::uint64_t seed,
                      std::vector<std::string> variables, std::optional<NormalizationStats> stats) {
    if (num_vars < 2) throw ConfigError("init_model: need at least 2 variables");
    if (variables.empty()) {
        for (std::size_t i = 0; i < num_vars; ++i) variables.push_back("y" + std::to_string(i));
    }
    NormalizationStats ns = stats ? *stats : NormalizationStats::identity(variables);
    NavarModel model(num_vars, config.lags, config.hidden, std::move(variables), std::move(ns));
    auto& prm = model.params();
    rng::Stream gen(rng::mix64(seed ^ 0x1f2e3d4c5b6a7988ULL));
    const double w1_bound = std::sqrt(6.0);
    const double w2_bound = 1.0 / std::sqrt(static_cast<double>(config.hidden));
    for (auto& w : prm.w1) w = gen.uniform(-w1_bound, w1_bound);
    for (auto& w : prm.w2) w = gen.uniform(-w2_bound, w2_bound);
    return model;
}

namespace {

void check_finite(const BatchResult& r, std::size_t batch_index) {
    if (!std::isfinite(r.total)) {
        throw NumericError("non-finite loss in batch " + std::to_string(batch_index));
    }
}

}  // namespace

BatchResult batch_loss_and_grads(const NavarModel& model, std::span<const LagWindow> batch,
                                 const TrainConfig& config, const std::optional<DropoutKey>& dropout) {
    std::vector<const LagWindow*> ptrs;
    ptrs.reserve(batch.size());
    for (const auto& w : batch) ptrs.push_back(&w);
    std::optional<DropoutMask> mask;
    if (dropout && config.dropout > 0.0) mask = DropoutMask::make(config.dropout, *dropout);
    kernels::Workspace ws;
    BatchResult out;
    kernels::loss_and_grads(model, ptrs, config, mask, ws, out);
    check_finite(out, 0);
    return out;
}

Objective evaluate_objective(const NavarModel& model, std::span<const LagWindow> windows,
                             const TrainConfig& config) {
    const BatchResult r = batch_loss_and_grads(model, windows, config);
    return {r.mse, r.sparsity, r.total};
}

AdamState::AdamState(const NavarParams& like)
    : m_(NavarParams::zeros(like.b2.size(), like.b2.empty() ? 0 : like.w1.size() / like.b2.size(),
                            like.target_bias.size())),
      v_(m_) {}

void AdamState::step(NavarParams& params, const NavarParams& grads, const TrainConfig& config) {
    ++t_;
    const double b1 = config.beta1;
    const double b2 = config.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double lr = config.learning_rate;
    const double eps = config.adam_eps;

    auto update = [&](std::vector<double>& theta, const std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v, double decay) {
        const long n = static_cast<long>(theta.size());
#pragma omp parallel for schedule(static)
        for (long k = 0; k < n; ++k) {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            const double mhat = m[k] / c1;
            const double vhat = v[k] / c2;
            theta[k] -= lr * (mhat / (std::sqrt(vhat) + eps) + decay * theta[k]);
        }
    };
    update(params.w1, grads.w1, m_.w1, v_.w1, config.weight_decay);
    update(params.b1, grads.b1, m_.b1, v_.b1, 0.0);
    update(params.w2, grads.w2, m_.w2, v_.w2, config.weight_decay);
    update(params.b2, grads.b2, m_.b2, v_.b2, 0.0);
    update(params.target_bias, grads.target_bias, m_.target_bias, v_.target_bias, 0.0);
}

std::vector<LossReport> train_windows(NavarModel& model, std::span<const LagWindow> windows,
                                      const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    if (windows.empty()) throw DataError("train: no training windows");
    const std::size_t n_vars = model.num_vars();
    const std::size_t total = windows.size();

    AdamState adam(model.params());
    kernels::Workspace ws;
    BatchResult result;
    std::vector<std::size_t> order(total);
    std::vector<const LagWindow*> batch;
    std::vector<LossReport> history;
    history.reserve(config.epochs);

    rng::Stream shuffler(rng::mix64(config.seed ^ 0x5eed5eed5eed5eedULL));
    const std::uint64_t dropout_seed = rng::mix64(config.seed ^ 0xd1e5d1e5d1e5d1e5ULL);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t k = total - 1; k > 0; --k) {
            std::swap(order[k], order[shuffler.below(k + 1)]);
        }

        double mse_sum = 0.0;
        double sparsity_sum = 0.0;
        std::vector<double> res_sum(n_vars, 0.0);
        std::vector<double> res_sq(n_vars, 0.0);
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < total; start += config.batch_size, ++batch_index) {
            const std::size_t stop = std::min(total, start + config.batch_size);
            batch.clear();
            for (std::size_t k = start; k < stop; ++k) batch.push_back(&windows[order[k]]);

            std::optional<DropoutMask> mask;
            if (config.dropout > 0.0) {
                mask = DropoutMask::make(config.dropout, {dropout_seed, adam.steps()});
            }
            kernels::loss_and_grads(model, batch, config, mask, ws, result);
            if (!std::isfinite(result.total)) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                                   " (batch " + std::to_string(batch_index) + ")");
            }
            const double rows = static_cast<double>(batch.size());
            mse_sum += result.mse * rows;
            sparsity_sum += result.sparsity * rows;
            for (std::size_t b = 0; b < batch.size(); ++b) {
                for (std::size_t i = 0; i < n_vars; ++i) {
                    const double e = result.residuals[b * n_vars + i];
                    res_sum[i] += e;
                    res_sq[i] += e * e;
                }
            }
            adam.step(model.params(), result.grads, config);
        }

        LossReport report;
        report.epoch = epoch;
        const double count = static_cast<double>(total);
        report.train_mse = mse_sum / count;
        report.sparsity_term = sparsity_sum / count;
        report.total_loss = report.train_mse + config.lambda_sparsity * report.sparsity_term;
        report.residual_mean.resize(n_vars);
        report.residual_var.resize(n_vars);
        for (std::size_t i = 0; i < n_vars; ++i) {
            const double mean = res_sum[i] / count;
            report.residual_mean[i] = mean;
            report.residual_var[i] = std::max(0.0, res_sq[i] / count - mean * mean);
        }
        if (!std::isfinite(report.total_loss)) {
            throw NumericError("training diverged at epoch " + std::to_string(epoch));
        }
        if (on_epoch) on_epoch(report);
        history.push_back(std::move(report));
    }
    return history;
}

TrainResult train(const PanelDataset& data, const SplitSpec& split, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    config.validate();
    split.validate();
    data.check_lag_order(config.lags);
    const NormalizationStats stats = fit_normalization(data, split);
    const PanelDataset norm = apply_normalization(data, stats);
    const WindowSet set = enumerate_windows(norm, config.lags, split.train);
    if (set.windows.empty()) throw DataError("train: training range yields no lag windows");

    TrainResult out;
    out.model = init_model(config, data.num_vars(), config.seed, data.variables(), stats);
    out.train_windows = set.windows.size();
    out.skipped_windows = set.skipped;
    out.history = train_windows(out.model, set.windows, config, on_epoch);
    return out;
}

GradientCheckReport gradient_check(const NavarModel& model, std::span<const LagWindow> windows,
                                   const TrainConfig& config, double h) {
    const BatchResult analytic = batch_loss_and_grads(model, windows, config);
    const auto& prm = model.params();
    const std::size_t hidden = model.hidden();
    const std::size_t nets = model.num_nets();
    const std::size_t n_vars = model.num_vars();
    const std::size_t lags = model.lags();

    // Kink screening: a perturbation of size h moves a pre-activation by at
    // most h * |x| (w1) or h (b1), and a net output by at most h times its
    // local sensitivity. Anything within twice that distance is excluded.
    std::vector<char> excluded(prm.size(), 0);
    const std::size_t o_b1 = prm.w1.size();
    const std::size_t o_w2 = o_b1 + prm.b1.size();
    const std::size_t o_b2 = o_w2 + prm.w2.size();
    for (std::size_t net = 0; net < nets; ++net) {
        const std::size_t j = (net / lags) % n_vars;
        const std::size_t l = net % lags + 1;
        for (const auto& w : windows) {
            const double x = w.input(j, l);
            double f = prm.b2[net];
            double sensitivity = 1.0;
            for (std::size_t k = 0; k < hidden; ++k) {
                const std::size_t idx = net * hidden + k;
                const double pre = prm.w1[idx] * x + prm.b1[idx];
                if (std::fabs(pre) <= 2.0 * h * std::max(1.0, std::fabs(x))) {
                    excluded[idx] = excluded[o_b1 + idx] = excluded[o_w2 + idx] = 1;
                }
                if (pre > 0.0) {
                    f += prm.w2[idx] * pre;
                    sensitivity = std::max({sensitivity, pre, std::fabs(prm.w2[idx] * x),
                                            std::fabs(prm.w2[idx])});
                }
            }
            if (config.lambda_sparsity > 0.0 && std::fabs(f) <= 2.0 * h * sensitivity) {
                for (std::size_t k = 0; k < hidden; ++k) {
                    const std::size_t idx = net * hidden + k;
                    excluded[idx] = excluded[o_b1 + idx] = excluded[o_w2 + idx] = 1;
                }
                excluded[o_b2 + net] = 1;
            }
        }
    }

    GradientCheckReport report;
    double sum = 0.0;
    const auto step = static_cast<long double>(h);
    for (std::size_t k = 0; k < prm.size(); ++k) {
        if (excluded[k]) {
            ++report.excluded_at_kink;
            continue;
        }
        const long double up = reference::loss_extended(model, windows, config, k, step);
        const long double down = reference::loss_extended(model, windows, config, k, -step);
        const double numeric = static_cast<double>((up - down) / (2.0L * step));
        const double a = analytic.grads.flat(k);
        const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
        const double rel = std::fabs(a - numeric) / denom;
        sum += rel;
        ++report.compared;
        if (rel > report.max_rel_error) report.max_rel_error = rel;
        report.worst.push_back({k, a, numeric, rel});
    }
    std::sort(report.worst.begin(), report.worst.end(),
              [](const auto& x, const auto& y) { return x.rel_error > y.rel_error; });
    if (report.worst.size() > 10) report.worst.resize(10);
    report.mean_rel_error = report.compared ? sum / static_cast<double>(report.compared) : 0.0;
    return report;
}

}  // namespace navar
