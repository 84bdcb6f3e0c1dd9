#include "navar/synth.hpp"

#include "navar/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

namespace navar::synth {

std::string to_string(Regime r) {
    switch (r) {
        case Regime::Basic: return "basic";
        case Regime::Persistent: return "persistent";
        case Regime::RedundantPair: return "redundant_pair";
    }
    return "basic";
}

Regime parse_regime(const std::string& s) {
    if (s == "basic") return Regime::Basic;
    if (s == "persistent") return Regime::Persistent;
    if (s == "redundant_pair" || s == "redundant") return Regime::RedundantPair;
    throw ConfigError("unknown regime '" + s + "' (expected basic|persistent|redundant_pair)");
}

std::string to_string(EdgeFunction f) {
    switch (f) {
        case EdgeFunction::Linear: return "linear";
        case EdgeFunction::Tanh: return "tanh";
        case EdgeFunction::QuadraticCentered: return "quadratic_centered";
    }
    return "linear";
}

EdgeFunction parse_edge_function(const std::string& s) {
    if (s == "linear") return EdgeFunction::Linear;
    if (s == "tanh") return EdgeFunction::Tanh;
    if (s == "quadratic_centered" || s == "quadratic") return EdgeFunction::QuadraticCentered;
    throw ConfigError("unknown edge function '" + s + "'");
}

double apply(EdgeFunction f, double x) noexcept {
    switch (f) {
        case EdgeFunction::Linear: return x;
        case EdgeFunction::Tanh: return std::tanh(x);
        case EdgeFunction::QuadraticCentered: return x * x - 1.0;
    }
    return x;
}

void DGPConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("dgp config: ") + what);
    };
    require(num_vars >= 2, "num_vars must be >= 2");
    require(regime != Regime::RedundantPair || num_vars >= 3, "redundant_pair needs num_vars >= 3");
    require(units >= 1, "units must be >= 1");
    require(length >= 50, "length must be >= 50");
    require(burn_in >= 100, "burn_in must be >= 100");
    require(noise_std > 0.0, "noise_std must be > 0");
    require(rho >= 0.0 && rho < 1.0, "rho must be in [0, 1)");
    require(redundancy >= 0.0 && redundancy <= 1.0, "redundancy must be in [0, 1]");
    require(max_lag >= 1, "max_lag must be >= 1");
    require(edge_strength > 0.0, "edge_strength must be > 0");
    const std::size_t pairs = num_vars * (num_vars - 1) / 2;
    require(regime == Regime::RedundantPair || num_edges <= pairs, "num_edges exceeds DAG capacity");
}

nlohmann::json dgp_config_to_json(const DGPConfig& c) {
    return {{"regime", to_string(c.regime)},
            {"num_vars", c.num_vars},
            {"units", c.units},
            {"length", c.length},
            {"noise_std", c.noise_std},
            {"rho", c.rho},
            {"redundancy", c.redundancy},
            {"seed", c.seed},
            {"burn_in", c.burn_in},
            {"max_lag", c.max_lag},
            {"num_edges", c.num_edges},
            {"edge_strength", c.edge_strength},
            {"pair_function", to_string(c.pair_function)},
            {"first_label", c.first_label},
            {"linear_only", c.linear_only}};
}

DGPConfig dgp_config_from_json(const nlohmann::json& j, DGPConfig c) {
    if (!j.is_object()) throw ConfigError("dgp config: expected a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "regime") c.regime = parse_regime(v.get<std::string>());
            else if (key == "num_vars") c.num_vars = v.get<std::size_t>();
            else if (key == "units") c.units = v.get<std::size_t>();
            else if (key == "length") c.length = v.get<std::size_t>();
            else if (key == "noise_std") c.noise_std = v.get<double>();
            else if (key == "rho") c.rho = v.get<double>();
            else if (key == "redundancy") c.redundancy = v.get<double>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "burn_in") c.burn_in = v.get<std::size_t>();
            else if (key == "max_lag") c.max_lag = v.get<std::size_t>();
            else if (key == "num_edges") c.num_edges = v.get<std::size_t>();
            else if (key == "edge_strength") c.edge_strength = v.get<double>();
            else if (key == "pair_function") c.pair_function = parse_edge_function(v.get<std::string>());
            else if (key == "first_label") c.first_label = v.get<int>();
            else if (key == "linear_only") c.linear_only = v.get<bool>();
            else throw ConfigError("dgp config: unknown key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("dgp config: ") + e.what());
    }
    c.validate();
    return c;
}

namespace {

// Base magnitude per shape keeps each edge's contribution std roughly in
// 0.3..1 for unit-scale sources.
double shape_gain(EdgeFunction f) {
    switch (f) {
        case EdgeFunction::Linear: return 1.0;
        case EdgeFunction::Tanh: return 1.4;
        case EdgeFunction::QuadraticCentered: return 0.45;
    }
    return 1.0;
}

GroundTruthGraph build_graph(const DGPConfig& c, rng::Stream& gen) {
    GroundTruthGraph g;
    g.num_vars = c.num_vars;
    g.max_lag = c.max_lag;
    g.regime = c.regime;
    if (c.rho > 0.0) {
        for (std::size_t i = 0; i < c.num_vars; ++i) g.edges.push_back({i, i, 1, EdgeFunction::Linear, c.rho});
    }
    const double damp = c.regime == Regime::Persistent ? (1.0 - c.rho) / 0.5 : 1.0;

    if (c.regime == Regime::RedundantPair) {
        g.decoy_of = 0;
        g.decoy = 1;
        g.shock_correlation = c.redundancy;
        const double sign = gen.uniform() < 0.5 ? -1.0 : 1.0;
        const double coef = sign * c.edge_strength * shape_gain(c.pair_function) * 0.5;
        g.edges.push_back({0, 2, 1, c.pair_function, coef});
        return g;
    }

    // Random DAG: edges only go forward in a seeded topological order.
    std::vector<std::size_t> order(c.num_vars);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t k = order.size() - 1; k > 0; --k) std::swap(order[k], order[gen.below(k + 1)]);
    std::vector<std::pair<std::size_t, std::size_t>> candidates;
    for (std::size_t a = 0; a < order.size(); ++a) {
        for (std::size_t b = a + 1; b < order.size(); ++b) candidates.emplace_back(order[a], order[b]);
    }
    for (std::size_t e = 0; e < c.num_edges; ++e) {
        const std::size_t pick = e + gen.below(candidates.size() - e);
        std::swap(candidates[e], candidates[pick]);
        const auto [source, target] = candidates[e];
        const EdgeFunction fn = c.linear_only ? EdgeFunction::Linear : static_cast<EdgeFunction>(e % 3);
        const std::size_t lag = 1 + gen.below(c.max_lag);
        const double magnitude = gen.uniform(0.5, 0.8) * c.edge_strength * shape_gain(fn) * damp;
        const double sign = gen.uniform() < 0.5 ? -1.0 : 1.0;
        g.edges.push_back({source, target, lag, fn, sign * magnitude});
    }
    return g;
}

}  // namespace

Generated generate(const DGPConfig& config) {
    config.validate();
    rng::Stream gen(rng::mix64(config.seed ^ 0x9a7b6c5d4e3f2011ULL));
    GroundTruthGraph graph = build_graph(config, gen);

    const std::size_t n = config.num_vars;
    const std::size_t steps = config.burn_in + config.length;
    const std::size_t hist = config.max_lag;
    std::vector<std::vector<const TrueEdge*>> incoming(n);
    for (const auto& e : graph.edges) incoming[e.target].push_back(&e);

    std::vector<std::string> units;
    for (std::size_t c = 0; c < config.units; ++c) units.push_back("u" + std::to_string(c));
    std::vector<std::string> vars;
    for (std::size_t i = 0; i < n; ++i) vars.push_back("y" + std::to_string(i));
    std::vector<int> labels(config.length);
    std::iota(labels.begin(), labels.end(), config.first_label);

    std::vector<double> values;
    values.reserve(config.units * config.length * n);
    const double r = config.redundancy;
    const double r_perp = std::sqrt(std::max(0.0, 1.0 - r * r));
    std::vector<double> shock(n);
    for (std::size_t c = 0; c < config.units; ++c) {
        std::vector<double> y((hist + steps) * n, 0.0);
        for (std::size_t s = 0; s < steps; ++s) {
            const std::size_t t = hist + s;
            for (std::size_t i = 0; i < n; ++i) shock[i] = gen.normal();
            if (graph.decoy >= 0) {
                const auto d = static_cast<std::size_t>(graph.decoy);
                shock[d] = r * shock[static_cast<std::size_t>(graph.decoy_of)] + r_perp * shock[d];
            }
            for (std::size_t i = 0; i < n; ++i) {
                double v = config.noise_std * shock[i];
                for (const TrueEdge* e : incoming[i]) {
                    v += e->coef * apply(e->fn, y[(t - e->lag) * n + e->source]);
                }
                if (!std::isfinite(v) || std::fabs(v) > 1e6) {
                    throw NumericError("synth: explosive simulation (|y| > 1e6) for config " +
                                       dgp_config_to_json(config).dump());
                }
                y[t * n + i] = v;
            }
        }
        const std::size_t keep_from = hist + config.burn_in;
        values.insert(values.end(), y.begin() + static_cast<long>(keep_from * n), y.end());
    }
    return {PanelDataset(std::move(units), std::move(vars), std::move(labels), std::move(values)),
            std::move(graph)};
}

std::vector<EdgeMask> oracle_necessity(const GroundTruthGraph& graph) {
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::vector<EdgeMask> out;
    for (const auto& e : graph.edges) {
        if (e.source == e.target) continue;
        if (graph.decoy >= 0 && e.source == static_cast<std::size_t>(graph.decoy)) continue;
        if (seen.emplace(e.target, e.source).second) out.push_back({e.target, e.source});
    }
    return out;
}

nlohmann::json graph_to_json(const GroundTruthGraph& g) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : g.edges) {
        edges.push_back({{"source", e.source},
                         {"target", e.target},
                         {"lag", e.lag},
                         {"fn", to_string(e.fn)},
                         {"coef", e.coef}});
    }
    nlohmann::json j = {{"num_vars", g.num_vars},
                        {"max_lag", g.max_lag},
                        {"regime", to_string(g.regime)},
                        {"edges", edges}};
    if (g.decoy >= 0) {
        j["decoy"] = {{"source", g.decoy}, {"correlated_with", g.decoy_of},
                      {"shock_correlation", g.shock_correlation}};
    }
    return j;
}

GroundTruthGraph graph_from_json(const nlohmann::json& j) {
    GroundTruthGraph g;
    try {
        g.num_vars = j.at("num_vars").get<std::size_t>();
        g.max_lag = j.at("max_lag").get<std::size_t>();
        g.regime = parse_regime(j.at("regime").get<std::string>());
        for (const auto& e : j.at("edges")) {
            TrueEdge te{e.at("source").get<std::size_t>(), e.at("target").get<std::size_t>(),
                        e.at("lag").get<std::size_t>(), parse_edge_function(e.at("fn").get<std::string>()),
                        e.at("coef").get<double>()};
            if (te.lag < 1 || te.lag > g.max_lag) throw DataError("graph json: lag exceeds max_lag");
            g.edges.push_back(te);
        }
        if (j.contains("decoy")) {
            g.decoy = j["decoy"].at("source").get<long>();
            g.decoy_of = j["decoy"].at("correlated_with").get<long>();
            g.shock_correlation = j["decoy"].at("shock_correlation").get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("graph json: ") + e.what());
    }
    return g;
}

RecoveryMetrics evaluate_recovery(const EdgeScreenReport& report, const std::vector<EdgeMask>& oracle) {
    RecoveryMetrics m;
    m.edges = report.rows.size();
    std::vector<char> positive(report.rows.size(), 0);
    for (const auto& e : oracle) {
        const auto it = std::find_if(report.rows.begin(), report.rows.end(),
                                     [&](const EdgeScreenRow& r) { return r.edge == e; });
        if (it == report.rows.end()) {
            throw DataError("evaluate_recovery: oracle edge " + std::to_string(e.source) + "->" +
                            std::to_string(e.target) + " is not in the report");
        }
        positive[static_cast<std::size_t>(it - report.rows.begin())] = 1;
    }
    for (char p : positive) m.oracle_edges += p ? 1 : 0;

    // Lower p ranks as "more necessary".
    double wins = 0.0;
    const std::size_t negatives = m.edges - m.oracle_edges;
    for (std::size_t a = 0; a < report.rows.size(); ++a) {
        if (!positive[a]) continue;
        for (std::size_t b = 0; b < report.rows.size(); ++b) {
            if (positive[b]) continue;
            const auto& pa = report.rows[a];
            const auto& pb = report.rows[b];
            if (pa.adjusted_p < pb.adjusted_p ||
                (pa.adjusted_p == pb.adjusted_p && pa.raw_p < pb.raw_p)) {
                wins += 1.0;
            } else if (pa.adjusted_p == pb.adjusted_p && pa.raw_p == pb.raw_p) {
                wins += 0.5;
            }
        }
    }
    m.auroc = (m.oracle_edges == 0 || negatives == 0)
                  ? std::numeric_limits<double>::quiet_NaN()
                  : wins / (static_cast<double>(m.oracle_edges) * static_cast<double>(negatives));

    for (std::size_t k = 0; k < report.rows.size(); ++k) {
        if (!report.rows[k].necessary) continue;
        ++m.rejected;
        if (positive[k]) ++m.true_positives;
        else ++m.false_positives;
    }
    m.precision = m.rejected ? static_cast<double>(m.true_positives) / static_cast<double>(m.rejected) : 0.0;
    m.recall = m.oracle_edges
                   ? static_cast<double>(m.true_positives) / static_cast<double>(m.oracle_edges)
                   : std::numeric_limits<double>::quiet_NaN();
    return m;
}

nlohmann::json metrics_to_json(const RecoveryMetrics& m) {
    auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
    return {{"auroc", num(m.auroc)},
            {"precision", num(m.precision)},
            {"recall", num(m.recall)},
            {"edges", m.edges},
            {"oracle_edges", m.oracle_edges},
            {"rejected", m.rejected},
            {"true_positives", m.true_positives},
            {"false_positives", m.false_positives}};
}

}  // namespace navar::synth
