#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace navar {

/// Inclusive interval of integer time labels.
struct TimeRange {
    int first = 0;
    int last = -1;

    [[nodiscard]] bool contains(int t) const noexcept { return t >= first && t <= last; }
    [[nodiscard]] bool empty() const noexcept { return last < first; }
    [[nodiscard]] int length() const noexcept { return empty() ? 0 : last - first + 1; }
};

/// Training/validation split over time labels. Validation must follow training.
struct SplitSpec {
    TimeRange train;
    TimeRange validation;

    /// Throws ConfigError when the ranges overlap, are out of order or
    /// validation is empty.
    void validate() const;
};

/// Balanced panel: every unit observed at the same consecutive integer time
/// labels, no missing values. Values are stored unit-major, then time, then
/// variable.
class PanelDataset {
public:
    PanelDataset() = default;
    PanelDataset(std::vector<std::string> units, std::vector<std::string> variables,
                 std::vector<int> time_labels, std::vector<double> values);

    [[nodiscard]] std::size_t num_units() const noexcept { return units_.size(); }
    [[nodiscard]] std::size_t num_vars() const noexcept { return variables_.size(); }
    [[nodiscard]] std::size_t num_times() const noexcept { return time_labels_.size(); }

    [[nodiscard]] const std::vector<std::string>& units() const noexcept { return units_; }
    [[nodiscard]] const std::vector<std::string>& variables() const noexcept { return variables_; }
    [[nodiscard]] const std::vector<int>& time_labels() const noexcept { return time_labels_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }

    [[nodiscard]] double at(std::size_t unit, std::size_t time, std::size_t var) const noexcept {
        return values_[(unit * num_times() + time) * num_vars() + var];
    }

    /// Row of all variables for one (unit, time) cell.
    [[nodiscard]] std::span<const double> row(std::size_t unit, std::size_t time) const noexcept {
        return {values_.data() + (unit * num_times() + time) * num_vars(), num_vars()};
    }

    /// Position of a time label, or -1 when absent.
    [[nodiscard]] long time_position(int label) const noexcept;

    /// Throws DataError for panels with fewer than `lag + 2` time points.
    void check_lag_order(std::size_t lag) const;

    friend bool operator==(const PanelDataset&, const PanelDataset&) = default;

private:
    std::vector<std::string> units_;
    std::vector<std::string> variables_;
    std::vector<int> time_labels_;
    std::vector<double> values_;
};

/// Sub-panel restricted to the labels in `range`. Throws DataError when the
/// range selects nothing.
[[nodiscard]] PanelDataset slice_times(const PanelDataset& data, const TimeRange& range);

/// Column names in the panel CSV. Variables are every remaining column when
/// `variables` is empty; otherwise exactly the listed columns, in that order.
struct CsvSchema {
    std::string unit_column = "unit";
    std::string time_column = "time";
    std::vector<std::string> variables;
};

/// Units and times are sorted, so the result does not depend on row order.
[[nodiscard]] PanelDataset load_panel_csv(const std::filesystem::path& path,
                                          const CsvSchema& schema = {});
[[nodiscard]] PanelDataset parse_panel_csv(const std::string& text, const CsvSchema& schema = {});

/// Writes `unit,time,<vars...>` with shortest round-trip decimal values.
void write_panel_csv(const std::filesystem::path& path, const PanelDataset& data);
[[nodiscard]] std::string format_panel_csv(const PanelDataset& data);

/// Per-variable z-score parameters. `std` uses the population (divide by n)
/// convention.
struct NormalizationStats {
    std::vector<std::string> variables;
    std::vector<double> mean;
    std::vector<double> std;

    [[nodiscard]] static NormalizationStats identity(std::vector<std::string> variables);

    friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

inline constexpr const char* kStdConvention = "population";

/// Mean and std pooled over all units and over time labels inside
/// `split.train` only. Throws DataError on a zero-variance variable.
[[nodiscard]] NormalizationStats fit_normalization(const PanelDataset& data, const SplitSpec& split);

/// (value - mean) / std on every cell, no clipping.
[[nodiscard]] PanelDataset apply_normalization(const PanelDataset& data,
                                               const NormalizationStats& stats);
[[nodiscard]] PanelDataset invert_normalization(const PanelDataset& data,
                                                const NormalizationStats& stats);

/// `{variable: {mean, std}}`, plus a `_meta` entry recording the convention.
[[nodiscard]] nlohmann::json stats_to_json(const NormalizationStats& stats);
[[nodiscard]] NormalizationStats stats_from_json(const nlohmann::json& j);

/// One supervised example: target values at `target_time` and the p
/// preceding observations of every variable (all from the same unit).
struct LagWindow {
    std::size_t unit = 0;
    std::size_t target_time = 0;  ///< position into time_labels
    int target_label = 0;
    std::size_t num_vars = 0;
    std::size_t lags = 0;
    /// lagged[(l - 1) * num_vars + j] = y_{j, t - l}, l = 1..lags
    std::vector<double> lagged;
    /// target[i] = y_{i, t}
    std::vector<double> target;

    [[nodiscard]] double input(std::size_t source, std::size_t lag) const noexcept {
        return lagged[(lag - 1) * num_vars + source];
    }
};

struct WindowSet {
    std::vector<LagWindow> windows;
    /// Targets inside the range whose history was too short.
    std::size_t skipped = 0;
};

/// Unit-major, time-ascending enumeration of every target label in `range`
/// that has `lags` observations of history in the same unit.
[[nodiscard]] WindowSet enumerate_windows(const PanelDataset& data, std::size_t lags,
                                          const TimeRange& range);

}  // namespace navar
