#pragma once

#include "navar/model.hpp"
#include "navar/necessity.hpp"
#include "navar/panel.hpp"

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace navar::synth {

enum class Regime { Basic, Persistent, RedundantPair };
enum class EdgeFunction { Linear, Tanh, QuadraticCentered };

[[nodiscard]] std::string to_string(Regime r);
[[nodiscard]] Regime parse_regime(const std::string& s);
[[nodiscard]] std::string to_string(EdgeFunction f);
[[nodiscard]] EdgeFunction parse_edge_function(const std::string& s);

/// linear: x, tanh: tanh(x), quadratic_centered: x^2 - 1.
[[nodiscard]] double apply(EdgeFunction f, double x) noexcept;

struct TrueEdge {
    std::size_t source = 0;
    std::size_t target = 0;
    std::size_t lag = 1;
    EdgeFunction fn = EdgeFunction::Linear;
    double coef = 0.0;

    friend bool operator==(const TrueEdge&, const TrueEdge&) = default;
};

/// Generating graph. Self-persistence appears as (i, i, 1, linear, rho)
/// edges. In the redundant-pair regime `decoy` names the source whose shocks
/// are correlated with `decoy_of` but which never enters any equation.
struct GroundTruthGraph {
    std::size_t num_vars = 0;
    std::size_t max_lag = 1;
    Regime regime = Regime::Basic;
    std::vector<TrueEdge> edges;
    long decoy = -1;
    long decoy_of = -1;
    double shock_correlation = 0.0;

    friend bool operator==(const GroundTruthGraph&, const GroundTruthGraph&) = default;
};

struct DGPConfig {
    Regime regime = Regime::Basic;
    std::size_t num_vars = 5;
    std::size_t units = 20;
    std::size_t length = 60;  ///< kept time points per unit, after burn-in
    double noise_std = 1.0;
    double rho = 0.5;          ///< self-persistence
    double redundancy = 0.9;   ///< shock correlation of the redundant pair
    std::uint64_t seed = 0;
    std::size_t burn_in = 100;
    std::size_t max_lag = 2;
    std::size_t num_edges = 3;  ///< cross edges (basic/persistent)
    double edge_strength = 1.0;
    EdgeFunction pair_function = EdgeFunction::Linear;  ///< redundant-pair edge shape
    int first_label = 1;
    /// Restrict cross edges to the linear shape (used by stationarity checks).
    bool linear_only = false;

    void validate() const;
};

[[nodiscard]] nlohmann::json dgp_config_to_json(const DGPConfig& c);
[[nodiscard]] DGPConfig dgp_config_from_json(const nlohmann::json& j, DGPConfig base = {});

struct Generated {
    PanelDataset data;
    GroundTruthGraph graph;
};

/// y_{i,t} = sum over edges into i of coef * g(y_{j,t-l}) + noise_std * e_{i,t}
/// with e iid N(0, 1), except that in the redundant-pair regime the decoy's
/// shock is redundancy * e_A + sqrt(1 - redundancy^2) * e'. Each unit starts at
/// zero and discards `burn_in` steps. Throws NumericError if |y| > 1e6.
[[nodiscard]] Generated generate(const DGPConfig& config);

/// Cross-variable edges that should be forecast-necessary, as (target, source).
[[nodiscard]] std::vector<EdgeMask> oracle_necessity(const GroundTruthGraph& graph);

[[nodiscard]] nlohmann::json graph_to_json(const GroundTruthGraph& g);
[[nodiscard]] GroundTruthGraph graph_from_json(const nlohmann::json& j);

struct RecoveryMetrics {
    double auroc = 0.0;  ///< NaN when the oracle is empty or covers every edge
    double precision = 0.0;  ///< 0 when nothing is rejected
    double recall = 0.0;     ///< NaN when the oracle is empty
    std::size_t edges = 0;
    std::size_t oracle_edges = 0;
    std::size_t rejected = 0;
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
};

/// AUROC ranks edges by ascending adjusted p, ties broken by raw p, exact
/// ties counted as one half. Throws DataError when the oracle names an edge
/// missing from the report.
[[nodiscard]] RecoveryMetrics evaluate_recovery(const EdgeScreenReport& report,
                                                const std::vector<EdgeMask>& oracle);

[[nodiscard]] nlohmann::json metrics_to_json(const RecoveryMetrics& m);

}  // namespace navar::synth
