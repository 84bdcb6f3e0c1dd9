#pragma once

#include "navar/model.hpp"
#include "navar/panel.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace navar {

/// Defaults are the published NAVAR settings used in all experiments.
struct TrainConfig {
    std::size_t lags = 8;
    std::size_t hidden = 32;
    double dropout = 0.10;
    double weight_decay = 1e-3;
    double lambda_sparsity = 0.15;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double learning_rate = 3e-4;
    std::size_t batch_size = 128;
    std::size_t epochs = 600;
    std::uint64_t seed = 0;

    /// Throws ConfigError on out-of-range values.
    void validate() const;
};

[[nodiscard]] nlohmann::json train_config_to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
[[nodiscard]] TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Loss conventions, recorded alongside every loss CSV.
inline constexpr const char* kMseConvention = "mean over batch windows of sum over targets";
inline constexpr const char* kSparsityConvention =
    "sum over nets of batch mean |f_ijl(x)| at the batch inputs";

struct LossReport {
    std::size_t epoch = 0;
    double train_mse = 0.0;
    double sparsity_term = 0.0;
    double total_loss = 0.0;
    /// Training-mode residuals y - y_hat accumulated over the epoch.
    std::vector<double> residual_mean;
    std::vector<double> residual_var;
};

[[nodiscard]] std::string loss_reports_csv(std::span<const LossReport> reports);

/// Identifies the dropout draw for one optimizer step.
struct DropoutKey {
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
};

struct BatchResult {
    double mse = 0.0;
    double sparsity = 0.0;
    double total = 0.0;
    NavarParams grads;
    /// y - y_hat per batch window, row-major (window, target).
    std::vector<double> residuals;
};

/// He-uniform w1 (fan-in 1), U(-1/sqrt(H), 1/sqrt(H)) for w2, zero biases.
[[nodiscard]] NavarModel init_model(const TrainConfig& config, std::size_t num_vars,
                                    std::uint64_t seed, std::vector<std::string> variables = {},
                                    std::optional<NormalizationStats> stats = std::nullopt);

/// Loss = mean_b sum_i (y - y_hat)^2 + lambda * sum_ijl mean_b |f_ijl|, with
/// gradients by manual backpropagation. Dropout is applied only when `dropout`
/// is given and config.dropout > 0. Throws NumericError on a non-finite loss.
[[nodiscard]] BatchResult batch_loss_and_grads(const NavarModel& model,
                                               std::span<const LagWindow> batch,
                                               const TrainConfig& config,
                                               const std::optional<DropoutKey>& dropout = std::nullopt);

/// Deterministic objective of a model on a window set (dropout off).
struct Objective {
    double mse = 0.0;
    double sparsity = 0.0;
    double total = 0.0;
};
[[nodiscard]] Objective evaluate_objective(const NavarModel& model, std::span<const LagWindow> windows,
                                           const TrainConfig& config);

/// One Adam step with decoupled weight decay on w1/w2 only.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(const NavarParams& like);

    void step(NavarParams& params, const NavarParams& grads, const TrainConfig& config);
    [[nodiscard]] std::uint64_t steps() const noexcept { return t_; }

private:
    NavarParams m_;
    NavarParams v_;
    std::uint64_t t_ = 0;
};

struct TrainResult {
    NavarModel model;
    std::vector<LossReport> history;
    std::size_t train_windows = 0;
    std::size_t skipped_windows = 0;
};

using EpochCallback = std::function<void(const LossReport&)>;

/// Fits normalization on the training range, then runs `epochs` passes of
/// seeded window-level shuffles over the pooled panel. Throws NumericError
/// with the epoch number on divergence.
[[nodiscard]] TrainResult train(const PanelDataset& data, const SplitSpec& split,
                                const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Same loop on an already normalized window set, starting from `model`.
[[nodiscard]] std::vector<LossReport> train_windows(NavarModel& model, std::span<const LagWindow> windows,
                                                    const TrainConfig& config,
                                                    const EpochCallback& on_epoch = {});

struct GradientCheckEntry {
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradientCheckReport {
    double max_rel_error = 0.0;
    double mean_rel_error = 0.0;
    std::size_t compared = 0;
    /// Parameters whose +/- h perturbation could cross a ReLU or |.| kink.
    std::size_t excluded_at_kink = 0;
    std::vector<GradientCheckEntry> worst;
};

/// Compares analytic gradients (dropout off) with central differences of
/// step `h`, evaluating the loss in extended precision. Relative error is
/// |a - n| / max(|a|, |n|, 1e-8).
[[nodiscard]] GradientCheckReport gradient_check(const NavarModel& model,
                                                 std::span<const LagWindow> windows,
                                                 const TrainConfig& config, double h = 1e-5);

}  // namespace navar
