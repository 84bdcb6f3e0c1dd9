#pragma once

#include "navar/panel.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace navar {

/// Read-only view of one univariate network x -> w2 . relu(w1 * x + b1) + b2.
struct NetView {
    std::span<const double> w1;
    std::span<const double> b1;
    std::span<const double> w2;
    double b2 = 0.0;
};

/// Standalone owning network, mainly for tests and examples.
struct ContributionNet {
    std::vector<double> w1;
    std::vector<double> b1;
    std::vector<double> w2;
    double b2 = 0.0;

    [[nodiscard]] NetView view() const noexcept { return {w1, b1, w2, b2}; }
};

/// Inference-mode evaluation (no dropout). Throws std::invalid_argument on
/// non-finite input.
[[nodiscard]] double eval_contribution(const NetView& net, double x);

/// All trainable parameters, stored net-major: net n owns
/// w1/b1/w2[n * hidden .. (n + 1) * hidden) and b2[n]. The same layout holds
/// gradients and optimizer moments.
struct NavarParams {
    std::vector<double> w1;
    std::vector<double> b1;
    std::vector<double> w2;
    std::vector<double> b2;
    std::vector<double> target_bias;

    [[nodiscard]] static NavarParams zeros(std::size_t nets, std::size_t hidden, std::size_t targets);

    [[nodiscard]] std::size_t size() const noexcept {
        return w1.size() + b1.size() + w2.size() + b2.size() + target_bias.size();
    }

    /// Flat addressing across the blocks in declaration order.
    [[nodiscard]] double& flat(std::size_t k);
    [[nodiscard]] double flat(std::size_t k) const;

    friend bool operator==(const NavarParams&, const NavarParams&) = default;
};

/// Neural additive VAR: for each target i, source j and lag l one network
/// f_ijl, and y_hat_i = target_bias[i] + sum_{j,l} f_ijl(y_{j, t-l}).
class NavarModel {
public:
    NavarModel() = default;
    NavarModel(std::size_t num_vars, std::size_t lags, std::size_t hidden,
               std::vector<std::string> variables, NormalizationStats norm_stats);

    [[nodiscard]] std::size_t num_vars() const noexcept { return num_vars_; }
    [[nodiscard]] std::size_t lags() const noexcept { return lags_; }
    [[nodiscard]] std::size_t hidden() const noexcept { return hidden_; }
    [[nodiscard]] std::size_t num_nets() const noexcept { return num_vars_ * num_vars_ * lags_; }

    [[nodiscard]] std::size_t net_index(std::size_t target, std::size_t source,
                                        std::size_t lag) const noexcept {
        return (target * num_vars_ + source) * lags_ + (lag - 1);
    }

    [[nodiscard]] NetView net(std::size_t target, std::size_t source, std::size_t lag) const noexcept {
        return net(net_index(target, source, lag));
    }
    [[nodiscard]] NetView net(std::size_t index) const noexcept;

    [[nodiscard]] const std::vector<std::string>& variables() const noexcept { return variables_; }
    [[nodiscard]] const NormalizationStats& norm_stats() const noexcept { return norm_stats_; }
    void set_norm_stats(NormalizationStats stats) { norm_stats_ = std::move(stats); }

    [[nodiscard]] NavarParams& params() noexcept { return params_; }
    [[nodiscard]] const NavarParams& params() const noexcept { return params_; }

    /// Throws DataError when the parameter arrays disagree with the shape or
    /// contain non-finite values.
    void validate() const;

    friend bool operator==(const NavarModel&, const NavarModel&) = default;

private:
    std::size_t num_vars_ = 0;
    std::size_t lags_ = 0;
    std::size_t hidden_ = 0;
    std::vector<std::string> variables_;
    NormalizationStats norm_stats_;
    NavarParams params_;
};

/// Removes every lag of source -> target from the target's prediction.
struct EdgeMask {
    std::size_t target = 0;
    std::size_t source = 0;

    friend bool operator==(const EdgeMask&, const EdgeMask&) = default;
};

/// Full prediction vector for one window; the masked edge contributes nothing.
[[nodiscard]] std::vector<double> predict(const NavarModel& model, const LagWindow& window,
                                          const std::optional<EdgeMask>& mask = std::nullopt);

/// Prediction of a single target, same summation order as predict().
[[nodiscard]] double predict_target(const NavarModel& model, const LagWindow& window,
                                    std::size_t target,
                                    const std::optional<EdgeMask>& mask = std::nullopt);

/// f_ijl(y_{j,t-l}) for one target over a window sequence.
struct ContributionTable {
    std::size_t target = 0;
    std::size_t num_vars = 0;
    std::size_t lags = 0;
    double bias = 0.0;
    /// values[(w * num_vars + j) * lags + (l - 1)]
    std::vector<double> values;

    [[nodiscard]] std::size_t num_windows() const noexcept {
        return num_vars * lags == 0 ? 0 : values.size() / (num_vars * lags);
    }
    [[nodiscard]] double at(std::size_t window, std::size_t source, std::size_t lag) const noexcept {
        return values[(window * num_vars + source) * lags + (lag - 1)];
    }
};

[[nodiscard]] ContributionTable contribution_series(const NavarModel& model,
                                                    std::span<const LagWindow> windows,
                                                    std::size_t target);

enum class ScoreStatistic { Variance, Std };
enum class DiagonalPolicy { Raw, Zeroed };

[[nodiscard]] std::string to_string(ScoreStatistic s);
[[nodiscard]] std::string to_string(DiagonalPolicy d);
[[nodiscard]] ScoreStatistic parse_score_statistic(const std::string& s);
[[nodiscard]] DiagonalPolicy parse_diagonal_policy(const std::string& s);

struct CausalScoreMatrix {
    std::size_t num_vars = 0;
    ScoreStatistic statistic = ScoreStatistic::Variance;
    DiagonalPolicy diagonal = DiagonalPolicy::Raw;
    /// scores[target * num_vars + source]
    std::vector<double> scores;

    [[nodiscard]] double at(std::size_t target, std::size_t source) const noexcept {
        return scores[target * num_vars + source];
    }
};

/// S_ij = sum_l Var_t f_ijl(y_{j,t-l}) (population variance over the
/// windows), or the sum of per-lag standard deviations. Needs >= 2 windows.
[[nodiscard]] CausalScoreMatrix causal_scores(const NavarModel& model,
                                              std::span<const LagWindow> windows,
                                              ScoreStatistic statistic = ScoreStatistic::Variance,
                                              DiagonalPolicy diagonal = DiagonalPolicy::Raw);

/// Checkpoint document; doubles are written in shortest round-trip form so
/// save -> load is bit-exact.
inline constexpr int kCheckpointVersion = 1;
[[nodiscard]] nlohmann::json model_to_json(const NavarModel& model);
[[nodiscard]] NavarModel model_from_json(const nlohmann::json& j);
[[nodiscard]] std::string serialize_model(const NavarModel& model);
void save_model(const std::filesystem::path& path, const NavarModel& model);
[[nodiscard]] NavarModel load_model(const std::filesystem::path& path);

[[nodiscard]] std::string scores_to_csv(const CausalScoreMatrix& s,
                                        const std::vector<std::string>& variables);
[[nodiscard]] nlohmann::json scores_to_json(const CausalScoreMatrix& s,
                                            const std::vector<std::string>& variables);

}  // namespace navar
