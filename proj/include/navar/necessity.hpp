#pragma once

#include "navar/model.hpp"
#include "navar/panel.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace navar {

/// One-step-ahead squared errors of a single target, one block per unit.
struct UnitLosses {
    std::size_t unit = 0;
    std::vector<int> times;
    std::vector<double> losses;
};

struct ForecastLosses {
    std::size_t target = 0;
    std::vector<UnitLosses> blocks;

    [[nodiscard]] std::size_t count() const noexcept;
    [[nodiscard]] double mean() const noexcept;
};

/// Squared error (model units, dropout off) for every validation-range
/// window. `data` must already be normalized with the model's stats.
/// Throws DataError when the validation range yields no windows.
[[nodiscard]] ForecastLosses forecast_losses(const NavarModel& model, const PanelDataset& data,
                                             const SplitSpec& split, std::size_t target,
                                             const std::optional<EdgeMask>& mask = std::nullopt);

/// Same, over a precomputed window sequence (unit-major, time-ascending).
[[nodiscard]] ForecastLosses forecast_losses(const NavarModel& model,
                                             std::span<const LagWindow> windows, std::size_t target,
                                             const std::optional<EdgeMask>& mask = std::nullopt);

struct DifferentialBlock {
    std::size_t unit = 0;
    std::vector<int> times;
    std::vector<double> loss_full;
    std::vector<double> loss_masked;
    std::vector<double> diff;  ///< loss_masked - loss_full
};

struct LossDifferentialSeries {
    EdgeMask edge;
    std::vector<DifferentialBlock> blocks;

    [[nodiscard]] std::size_t count() const noexcept;
    [[nodiscard]] std::vector<std::vector<double>> diff_blocks() const;
};

/// Throws DataError when the (unit, time) index sets differ.
[[nodiscard]] LossDifferentialSeries build_differential(const ForecastLosses& full,
                                                        const ForecastLosses& masked,
                                                        const EdgeMask& edge);

/// nullopt selects the Newey-West plug-in floor(4 (T/100)^(2/9)), capped at
/// T - 1, where T is the shortest block length.
using Bandwidth = std::optional<std::size_t>;

[[nodiscard]] std::size_t resolve_bandwidth(const Bandwidth& bandwidth, std::size_t block_length);

/// Bartlett-kernel long-run variance of the pooled mean. Autocovariances are
/// taken within blocks only, demeaned by the pooled mean, and divided by the
/// pooled count n. Returns exactly 0 for a constant series.
[[nodiscard]] double hac_variance_of_mean(std::span<const std::vector<double>> blocks,
                                          const Bandwidth& bandwidth = std::nullopt);
[[nodiscard]] double hac_variance_of_mean(const LossDifferentialSeries& series,
                                          const Bandwidth& bandwidth = std::nullopt);

inline constexpr const char* kNestedModelWarning =
    "masked model is nested in the full model; DM p-values are approximate and may be conservative "
    "in small samples";

struct DMTestResult {
    EdgeMask edge;
    double mean_diff = 0.0;
    double hac_variance_of_mean = 0.0;
    std::optional<double> dm_stat;
    std::optional<double> p_value;  ///< one-sided, standard normal upper tail
    std::size_t n_obs = 0;
    std::size_t bandwidth = 0;
    bool degenerate = false;
    bool necessary = false;
    double alpha = 0.05;
    std::string warning = kNestedModelWarning;
};

[[nodiscard]] double normal_upper_tail(double z) noexcept;

[[nodiscard]] DMTestResult dm_test(std::span<const std::vector<double>> blocks, double alpha = 0.05,
                                   const Bandwidth& bandwidth = std::nullopt);
[[nodiscard]] DMTestResult dm_test(const LossDifferentialSeries& series, double alpha = 0.05,
                                   const Bandwidth& bandwidth = std::nullopt);

enum class Correction { None, Bonferroni, BenjaminiHochberg };

[[nodiscard]] std::string to_string(Correction c);
[[nodiscard]] Correction parse_correction(const std::string& s);

/// Adjusted p-values in input order. Throws std::invalid_argument when a raw
/// value lies outside [0, 1].
[[nodiscard]] std::vector<double> adjust_pvalues(std::span<const double> raw, Correction method);

struct EdgeScreenRow {
    EdgeMask edge;
    double navar_score = 0.0;
    double mean_loss_full = 0.0;
    double mean_loss_masked = 0.0;
    DMTestResult test;
    /// p used for adjustment; 1 for degenerate rows
    double raw_p = 1.0;
    double adjusted_p = 1.0;
    bool necessary = false;  ///< adjusted_p < alpha and not degenerate
};

struct EdgeScreenReport {
    std::vector<EdgeScreenRow> rows;
    Correction correction = Correction::BenjaminiHochberg;
    double alpha = 0.05;
    std::size_t bandwidth = 0;
    bool raw_units = false;
    std::vector<std::string> variables;
};

struct ScreenOptions {
    Correction correction = Correction::BenjaminiHochberg;
    double alpha = 0.05;
    Bandwidth bandwidth;
    /// Report loss columns in original units (loss * std_target^2).
    bool raw_units = false;
    /// Restrict the screen to these edges; empty means every ordered pair i != j.
    std::vector<EdgeMask> edges;
};

/// Ablation plus DM test for every requested edge, no retraining. `data`
/// must already be normalized with the model's stats. Rows are sorted by
/// adjusted p, ties by (target, source).
[[nodiscard]] EdgeScreenReport screen_all_edges(const NavarModel& model, const PanelDataset& data,
                                                const SplitSpec& split,
                                                const CausalScoreMatrix& scores,
                                                const ScreenOptions& options);

/// The same computation without OpenMP, kept for cross-checking.
[[nodiscard]] EdgeScreenReport screen_all_edges_serial(const NavarModel& model,
                                                       const PanelDataset& data,
                                                       const SplitSpec& split,
                                                       const CausalScoreMatrix& scores,
                                                       const ScreenOptions& options);

inline constexpr const char* kReportColumns =
    "target,source,navar_score,mean_loss_full,mean_loss_masked,mean_diff,dm_stat,p_value,"
    "p_adjusted,necessary,degenerate,warning";

[[nodiscard]] std::string report_to_csv(const EdgeScreenReport& report);
[[nodiscard]] nlohmann::json report_to_json(const EdgeScreenReport& report);
[[nodiscard]] EdgeScreenReport report_from_json(const nlohmann::json& j);

[[nodiscard]] const char* verdict_label(bool necessary) noexcept;

/// Side-by-side "Measure" table for a few rows, one column per edge.
[[nodiscard]] std::string render_measure_table(std::span<const EdgeScreenRow> rows,
                                               const std::vector<std::string>& variables);

}  // namespace navar
