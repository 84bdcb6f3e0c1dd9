#pragma once

// End-to-end composition used by the CLI and the acceptance suite:
// normalize -> train -> score -> ablate and test every edge.

#include "navar/model.hpp"
#include "navar/necessity.hpp"
#include "navar/panel.hpp"
#include "navar/trainer.hpp"

#include <optional>

namespace navar {

/// Last `validation_length` labels for validation, everything before for training.
[[nodiscard]] SplitSpec tail_split(const PanelDataset& data, int validation_length);

struct ScoreOptions {
    ScoreStatistic statistic = ScoreStatistic::Variance;
    DiagonalPolicy diagonal = DiagonalPolicy::Raw;
    /// Window range for scoring; defaults to the training range.
    std::optional<TimeRange> range;
};

/// Scores over `options.range` (or the split's training range) on data that
/// has been normalized with the model's stats.
[[nodiscard]] CausalScoreMatrix score_model(const NavarModel& model, const PanelDataset& normalized,
                                            const SplitSpec& split, const ScoreOptions& options = {});

struct PipelineResult {
    NavarModel model;
    std::vector<LossReport> history;
    CausalScoreMatrix scores;
    EdgeScreenReport report;
};

[[nodiscard]] PipelineResult run_pipeline(const PanelDataset& raw, const SplitSpec& split,
                                          const TrainConfig& train_config,
                                          const ScoreOptions& score_options = {},
                                          const ScreenOptions& screen_options = {});

}  // namespace navar
