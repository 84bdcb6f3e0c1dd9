#include "navar/necessity.hpp"

#include "navar/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace navar {

std::size_t ForecastLosses::count() const noexcept {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.losses.size();
    return n;
}

double ForecastLosses::mean() const noexcept {
    double s = 0.0;
    for (const auto& b : blocks) {
        for (double v : b.losses) s += v;
    }
    const std::size_t n = count();
    return n ? s / static_cast<double>(n) : 0.0;
}

ForecastLosses forecast_losses(const NavarModel& model, std::span<const LagWindow> windows,
                               std::size_t target, const std::optional<EdgeMask>& mask) {
    if (windows.empty()) throw DataError("forecast_losses: validation range yields no windows");
    if (mask && mask->target != target) {
        throw std::invalid_argument("forecast_losses: mask target differs from evaluated target");
    }
    ForecastLosses out;
    out.target = target;
    for (const auto& w : windows) {
        if (out.blocks.empty() || out.blocks.back().unit != w.unit) {
            out.blocks.push_back({w.unit, {}, {}});
        }
        const double e = w.target[target] - predict_target(model, w, target, mask);
        out.blocks.back().times.push_back(w.target_label);
        out.blocks.back().losses.push_back(e * e);
    }
    return out;
}

ForecastLosses forecast_losses(const NavarModel& model, const PanelDataset& data,
                               const SplitSpec& split, std::size_t target,
                               const std::optional<EdgeMask>& mask) {
    if (split.validation.empty()) throw DataError("forecast_losses: empty validation range");
    const WindowSet set = enumerate_windows(data, model.lags(), split.validation);
    return forecast_losses(model, set.windows, target, mask);
}

std::size_t LossDifferentialSeries::count() const noexcept {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.diff.size();
    return n;
}

std::vector<std::vector<double>> LossDifferentialSeries::diff_blocks() const {
    std::vector<std::vector<double>> out;
    out.reserve(blocks.size());
    for (const auto& b : blocks) out.push_back(b.diff);
    return out;
}

LossDifferentialSeries build_differential(const ForecastLosses& full, const ForecastLosses& masked,
                                          const EdgeMask& edge) {
    if (full.blocks.size() != masked.blocks.size()) {
        throw DataError("build_differential: unit blocks differ between full and masked losses");
    }
    LossDifferentialSeries out;
    out.edge = edge;
    for (std::size_t k = 0; k < full.blocks.size(); ++k) {
        const auto& f = full.blocks[k];
        const auto& m = masked.blocks[k];
        if (f.unit != m.unit || f.times != m.times || f.losses.size() != m.losses.size() ||
            f.losses.size() != f.times.size()) {
            throw DataError("build_differential: (unit, time) index mismatch in block " +
                            std::to_string(k));
        }
        for (std::size_t t = 1; t < f.times.size(); ++t) {
            if (f.times[t] <= f.times[t - 1]) {
                throw DataError("build_differential: block times are not strictly increasing");
            }
        }
        DifferentialBlock b;
        b.unit = f.unit;
        b.times = f.times;
        b.loss_full = f.losses;
        b.loss_masked = m.losses;
        b.diff.resize(f.losses.size());
        for (std::size_t t = 0; t < f.losses.size(); ++t) b.diff[t] = m.losses[t] - f.losses[t];
        out.blocks.push_back(std::move(b));
    }
    return out;
}

std::size_t resolve_bandwidth(const Bandwidth& bandwidth, std::size_t block_length) {
    if (bandwidth) return *bandwidth;
    if (block_length <= 1) return 0;
    const double t = static_cast<double>(block_length);
    auto b = static_cast<std::size_t>(std::floor(4.0 * std::pow(t / 100.0, 2.0 / 9.0)));
    return std::min(b, block_length - 1);
}

double hac_variance_of_mean(std::span<const std::vector<double>> blocks, const Bandwidth& bandwidth) {
    std::size_t n = 0;
    std::size_t shortest = 0;
    double sum = 0.0;
    bool first = true;
    bool constant = true;
    double ref = 0.0;
    for (const auto& b : blocks) {
        if (b.empty()) continue;
        shortest = first ? b.size() : std::min(shortest, b.size());
        for (double v : b) {
            if (first) {
                ref = v;
                first = false;
            }
            constant = constant && v == ref;
            sum += v;
        }
        n += b.size();
    }
    if (n < 2) throw std::invalid_argument("hac_variance_of_mean: need at least 2 observations");
    if (constant) return 0.0;

    const double count = static_cast<double>(n);
    const double mean = sum / count;
    const std::size_t lags = resolve_bandwidth(bandwidth, shortest);

    auto autocov = [&](std::size_t k) {
        double acc = 0.0;
        for (const auto& b : blocks) {
            for (std::size_t t = k; t < b.size(); ++t) acc += (b[t] - mean) * (b[t - k] - mean);
        }
        return acc / count;
    };
    double lrv = autocov(0);
    for (std::size_t k = 1; k <= lags; ++k) {
        const double weight = 1.0 - static_cast<double>(k) / static_cast<double>(lags + 1);
        lrv += 2.0 * weight * autocov(k);
    }
    return std::max(0.0, lrv / count);
}

double hac_variance_of_mean(const LossDifferentialSeries& series, const Bandwidth& bandwidth) {
    const auto blocks = series.diff_blocks();
    return hac_variance_of_mean(blocks, bandwidth);
}

double normal_upper_tail(double z) noexcept { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

DMTestResult dm_test(std::span<const std::vector<double>> blocks, double alpha,
                     const Bandwidth& bandwidth) {
    DMTestResult r;
    r.alpha = alpha;
    double sum = 0.0;
    std::size_t shortest = 0;
    bool first = true;
    for (const auto& b : blocks) {
        if (b.empty()) continue;
        for (double v : b) sum += v;
        r.n_obs += b.size();
        shortest = first ? b.size() : std::min(shortest, b.size());
        first = false;
    }
    if (r.n_obs < 2) throw std::invalid_argument("dm_test: need at least 2 observations");
    r.mean_diff = sum / static_cast<double>(r.n_obs);
    r.bandwidth = resolve_bandwidth(bandwidth, shortest);
    r.hac_variance_of_mean = hac_variance_of_mean(blocks, bandwidth);
    if (!(r.hac_variance_of_mean > 0.0)) {
        r.degenerate = true;
        r.necessary = false;
        return r;
    }
    r.dm_stat = r.mean_diff / std::sqrt(r.hac_variance_of_mean);
    r.p_value = normal_upper_tail(*r.dm_stat);
    r.necessary = *r.p_value < alpha;
    return r;
}

DMTestResult dm_test(const LossDifferentialSeries& series, double alpha, const Bandwidth& bandwidth) {
    const auto blocks = series.diff_blocks();
    DMTestResult r = dm_test(blocks, alpha, bandwidth);
    r.edge = series.edge;
    return r;
}

std::string to_string(Correction c) {
    switch (c) {
        case Correction::None: return "none";
        case Correction::Bonferroni: return "bonferroni";
        case Correction::BenjaminiHochberg: return "benjamini_hochberg";
    }
    return "none";
}

Correction parse_correction(const std::string& s) {
    if (s == "none") return Correction::None;
    if (s == "bonferroni") return Correction::Bonferroni;
    if (s == "benjamini_hochberg" || s == "bh" || s == "fdr") return Correction::BenjaminiHochberg;
    throw ConfigError("unknown correction '" + s + "' (expected none|bonferroni|benjamini_hochberg)");
}

std::vector<double> adjust_pvalues(std::span<const double> raw, Correction method) {
    for (double p : raw) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::invalid_argument("adjust_pvalues: p-value outside [0, 1]");
        }
    }
    const std::size_t m = raw.size();
    std::vector<double> out(raw.begin(), raw.end());
    if (m == 0 || method == Correction::None) return out;
    const double md = static_cast<double>(m);
    if (method == Correction::Bonferroni) {
        for (auto& p : out) p = std::min(1.0, md * p);
        return out;
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return raw[a] < raw[b]; });
    double running = 1.0;
    for (std::size_t r = m; r-- > 0;) {
        // m / rank >= 1, so the product never rounds below the raw p.
        const double candidate = raw[order[r]] * (md / static_cast<double>(r + 1));
        running = std::min(running, candidate);
        out[order[r]] = running;
    }
    return out;
}

namespace {

struct EdgeJob {
    EdgeMask edge;
    EdgeScreenRow row;
    std::exception_ptr error;
};

std::vector<EdgeMask> requested_edges(const NavarModel& model, const ScreenOptions& options) {
    if (!options.edges.empty()) {
        for (const auto& e : options.edges) {
            if (e.target >= model.num_vars() || e.source >= model.num_vars()) {
                throw ConfigError("screen: edge index out of range");
            }
        }
        return options.edges;
    }
    std::vector<EdgeMask> edges;
    for (std::size_t i = 0; i < model.num_vars(); ++i) {
        for (std::size_t j = 0; j < model.num_vars(); ++j) {
            if (i != j) edges.push_back({i, j});
        }
    }
    return edges;
}

EdgeScreenReport run_screen(const NavarModel& model, const PanelDataset& data, const SplitSpec& split,
                            const CausalScoreMatrix& scores, const ScreenOptions& options,
                            bool parallel) {
    if (model.num_vars() < 2) throw ConfigError("screen: need at least 2 variables");
    if (scores.num_vars != model.num_vars()) {
        throw DataError("screen: score matrix does not match model size");
    }
    if (data.num_vars() != model.num_vars()) throw DataError("screen: data does not match model");
    const WindowSet set = enumerate_windows(data, model.lags(), split.validation);
    if (set.windows.empty()) throw DataError("screen: validation range yields no windows");
    const std::span<const LagWindow> windows(set.windows);

    const std::size_t n = model.num_vars();
    std::vector<ForecastLosses> full(n);
    for (std::size_t i = 0; i < n; ++i) full[i] = forecast_losses(model, windows, i);

    std::vector<EdgeJob> jobs;
    for (const auto& e : requested_edges(model, options)) jobs.push_back({e, {}, nullptr});

    auto process = [&](EdgeJob& job) {
        try {
            const auto& e = job.edge;
            const ForecastLosses masked = forecast_losses(model, windows, e.target, e);
            const LossDifferentialSeries series = build_differential(full[e.target], masked, e);
            EdgeScreenRow& row = job.row;
            row.edge = e;
            row.navar_score = scores.at(e.target, e.source);
            row.mean_loss_full = full[e.target].mean();
            row.mean_loss_masked = masked.mean();
            row.test = dm_test(series, options.alpha, options.bandwidth);
            row.raw_p = row.test.p_value.value_or(1.0);
        } catch (...) {
            job.error = std::current_exception();
        }
    };

    const long count = static_cast<long>(jobs.size());
    if (parallel) {
#pragma omp parallel for schedule(dynamic)
        for (long k = 0; k < count; ++k) process(jobs[static_cast<std::size_t>(k)]);
    } else {
        for (long k = 0; k < count; ++k) process(jobs[static_cast<std::size_t>(k)]);
    }
    for (const auto& job : jobs) {
        if (job.error) std::rethrow_exception(job.error);
    }

    std::vector<double> raw;
    raw.reserve(jobs.size());
    for (const auto& job : jobs) raw.push_back(job.row.raw_p);
    const std::vector<double> adjusted = adjust_pvalues(raw, options.correction);

    EdgeScreenReport report;
    report.correction = options.correction;
    report.alpha = options.alpha;
    report.raw_units = options.raw_units;
    report.variables = model.variables();
    report.bandwidth = jobs.empty() ? 0 : jobs.front().row.test.bandwidth;
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        EdgeScreenRow row = jobs[k].row;
        row.adjusted_p = adjusted[k];
        row.necessary = !row.test.degenerate && row.adjusted_p < options.alpha;
        if (options.raw_units) {
            const double s = model.norm_stats().std[row.edge.target];
            row.mean_loss_full *= s * s;
            row.mean_loss_masked *= s * s;
        }
        report.rows.push_back(std::move(row));
    }
    std::stable_sort(report.rows.begin(), report.rows.end(), [](const auto& a, const auto& b) {
        if (a.adjusted_p != b.adjusted_p) return a.adjusted_p < b.adjusted_p;
        if (a.edge.target != b.edge.target) return a.edge.target < b.edge.target;
        return a.edge.source < b.edge.source;
    });
    return report;
}

double reported_mean_diff(const EdgeScreenReport& report, const EdgeScreenRow& row) {
    return report.raw_units ? row.mean_loss_masked - row.mean_loss_full : row.test.mean_diff;
}

}  // namespace

EdgeScreenReport screen_all_edges(const NavarModel& model, const PanelDataset& data,
                                  const SplitSpec& split, const CausalScoreMatrix& scores,
                                  const ScreenOptions& options) {
    return run_screen(model, data, split, scores, options, true);
}

EdgeScreenReport screen_all_edges_serial(const NavarModel& model, const PanelDataset& data,
                                         const SplitSpec& split, const CausalScoreMatrix& scores,
                                         const ScreenOptions& options) {
    return run_screen(model, data, split, scores, options, false);
}

const char* verdict_label(bool necessary) noexcept { return necessary ? "Yes" : "No"; }

std::string report_to_csv(const EdgeScreenReport& report) {
    std::string out = std::string(kReportColumns) + "\n";
    for (const auto& r : report.rows) {
        out += report.variables[r.edge.target] + "," + report.variables[r.edge.source] + ",";
        out += format_double(r.navar_score) + "," + format_double(r.mean_loss_full) + "," +
               format_double(r.mean_loss_masked) + "," + format_double(reported_mean_diff(report, r)) +
               ",";
        out += (r.test.dm_stat ? format_double(*r.test.dm_stat) : std::string()) + ",";
        out += (r.test.p_value ? format_scientific(*r.test.p_value) : std::string()) + ",";
        out += format_scientific(r.adjusted_p) + ",";
        out += std::string(r.necessary ? "true" : "false") + "," + (r.test.degenerate ? "true" : "false");
        out += ",\"" + r.test.warning + "\"\n";
    }
    return out;
}

nlohmann::json report_to_json(const EdgeScreenReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        nlohmann::json row;
        row["target"] = report.variables[r.edge.target];
        row["source"] = report.variables[r.edge.source];
        row["target_index"] = r.edge.target;
        row["source_index"] = r.edge.source;
        row["navar_score"] = r.navar_score;
        row["mean_loss_full"] = r.mean_loss_full;
        row["mean_loss_masked"] = r.mean_loss_masked;
        row["mean_diff"] = reported_mean_diff(report, r);
        row["hac_variance_of_mean"] = r.test.hac_variance_of_mean;
        row["dm_stat"] = r.test.dm_stat ? nlohmann::json(*r.test.dm_stat) : nlohmann::json(nullptr);
        row["p_value"] = r.test.p_value ? nlohmann::json(*r.test.p_value) : nlohmann::json(nullptr);
        row["p_adjusted"] = r.adjusted_p;
        row["necessary"] = r.necessary;
        row["degenerate"] = r.test.degenerate;
        row["n_obs"] = r.test.n_obs;
        row["warning"] = r.test.warning;
        rows.push_back(std::move(row));
    }
    return {{"format", "navar-necessity-report"},
            {"version", 1},
            {"correction", to_string(report.correction)},
            {"alpha", report.alpha},
            {"bandwidth", report.bandwidth},
            {"loss_units", report.raw_units ? "raw" : "normalized"},
            {"loss_scope", "target equation only, mean over pooled validation windows"},
            {"null_distribution", "standard normal, one-sided upper tail"},
            {"variables", report.variables},
            {"rows", rows}};
}

EdgeScreenReport report_from_json(const nlohmann::json& j) {
    EdgeScreenReport report;
    try {
        if (j.at("format").get<std::string>() != "navar-necessity-report") {
            throw DataError("necessity report: unexpected format tag");
        }
        report.correction = parse_correction(j.at("correction").get<std::string>());
        report.alpha = j.at("alpha").get<double>();
        report.bandwidth = j.at("bandwidth").get<std::size_t>();
        report.raw_units = j.at("loss_units").get<std::string>() == "raw";
        report.variables = j.at("variables").get<std::vector<std::string>>();
        for (const auto& row : j.at("rows")) {
            EdgeScreenRow r;
            r.edge = {row.at("target_index").get<std::size_t>(), row.at("source_index").get<std::size_t>()};
            r.navar_score = row.at("navar_score").get<double>();
            r.mean_loss_full = row.at("mean_loss_full").get<double>();
            r.mean_loss_masked = row.at("mean_loss_masked").get<double>();
            r.test.edge = r.edge;
            r.test.mean_diff = row.at("mean_diff").get<double>();
            r.test.hac_variance_of_mean = row.at("hac_variance_of_mean").get<double>();
            if (!row.at("dm_stat").is_null()) r.test.dm_stat = row.at("dm_stat").get<double>();
            if (!row.at("p_value").is_null()) r.test.p_value = row.at("p_value").get<double>();
            r.test.degenerate = row.at("degenerate").get<bool>();
            r.test.n_obs = row.at("n_obs").get<std::size_t>();
            r.test.alpha = report.alpha;
            r.test.necessary = r.test.p_value && *r.test.p_value < report.alpha;
            r.test.warning = row.at("warning").get<std::string>();
            r.raw_p = r.test.p_value.value_or(1.0);
            r.adjusted_p = row.at("p_adjusted").get<double>();
            r.necessary = row.at("necessary").get<bool>();
            report.rows.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("necessity report: ") + e.what());
    }
    return report;
}

std::string render_measure_table(std::span<const EdgeScreenRow> rows,
                                 const std::vector<std::string>& variables) {
    auto fixed = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.7f", v);
        return std::string(buf);
    };
    std::vector<std::vector<std::string>> table;
    std::vector<std::string> header{"Measure"};
    std::vector<std::string> target{"Target"};
    for (std::size_t k = 0; k < rows.size(); ++k) {
        header.push_back("Source " + std::to_string(k + 1) + " (" + variables[rows[k].edge.source] + ")");
        target.push_back(variables[rows[k].edge.target]);
    }
    table.push_back(header);
    table.push_back(target);
    auto add = [&](const std::string& label, auto&& cell) {
        std::vector<std::string> line{label};
        for (const auto& r : rows) line.push_back(cell(r));
        table.push_back(std::move(line));
    };
    add("NAVAR Score", [&](const EdgeScreenRow& r) { return fixed(r.navar_score); });
    add("Mean Loss Full", [&](const EdgeScreenRow& r) { return fixed(r.mean_loss_full); });
    add("Mean Loss Masked", [&](const EdgeScreenRow& r) { return fixed(r.mean_loss_masked); });
    add("Mean Diff.", [&](const EdgeScreenRow& r) { return fixed(r.mean_loss_masked - r.mean_loss_full); });
    add("DM stat", [&](const EdgeScreenRow& r) {
        return r.test.dm_stat ? fixed(*r.test.dm_stat) : std::string("n/a (degenerate)");
    });
    add("p-value", [&](const EdgeScreenRow& r) {
        return r.test.p_value ? format_scientific(*r.test.p_value, 2) : std::string("n/a");
    });
    add("p-adjusted", [&](const EdgeScreenRow& r) { return format_scientific(r.adjusted_p, 2); });
    add("Forecast-necessary?", [&](const EdgeScreenRow& r) { return std::string(verdict_label(r.necessary)); });

    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& line : table) {
        for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
    }
    std::string out;
    for (const auto& line : table) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            out += line[c];
            if (c + 1 < line.size()) out += std::string(width[c] - line[c].size() + 2, ' ');
        }
        out += "\n";
    }
    return out;
}

}  // namespace navar
