#include "navar/pipeline.hpp"

#include "navar/common.hpp"

namespace navar {

SplitSpec tail_split(const PanelDataset& data, int validation_length) {
    const auto& labels = data.time_labels();
    if (validation_length < 1 || static_cast<std::size_t>(validation_length) >= labels.size()) {
        throw ConfigError("split: validation length must be in [1, T)");
    }
    const int last = labels.back();
    return {{labels.front(), last - validation_length}, {last - validation_length + 1, last}};
}

CausalScoreMatrix score_model(const NavarModel& model, const PanelDataset& normalized,
                              const SplitSpec& split, const ScoreOptions& options) {
    const TimeRange range = options.range.value_or(split.train);
    const WindowSet set = enumerate_windows(normalized, model.lags(), range);
    return causal_scores(model, set.windows, options.statistic, options.diagonal);
}

PipelineResult run_pipeline(const PanelDataset& raw, const SplitSpec& split,
                            const TrainConfig& train_config, const ScoreOptions& score_options,
                            const ScreenOptions& screen_options) {
    TrainResult trained = train(raw, split, train_config);
    const PanelDataset normalized = apply_normalization(raw, trained.model.norm_stats());
    PipelineResult out;
    out.scores = score_model(trained.model, normalized, split, score_options);
    out.report = screen_all_edges(trained.model, normalized, split, out.scores, screen_options);
    out.model = std::move(trained.model);
    out.history = std::move(trained.history);
    return out;
}

}  // namespace navar
