#include "navar/panel.hpp"

#include "navar/common.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace navar {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    std::string out(s.substr(b, e - b));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
        out = out.substr(1, out.size() - 2);
    }
    return out;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string::npos) {
            fields.push_back(trim(std::string_view(line).substr(start)));
            break;
        }
        fields.push_back(trim(std::string_view(line).substr(start, pos - start)));
        start = pos + 1;
    }
    return fields;
}

std::string where(std::size_t line, const std::string& column) {
    return "line " + std::to_string(line) + ", column '" + column + "'";
}

}  // namespace

void SplitSpec::validate() const {
    if (train.empty()) throw ConfigError("split: training range is empty");
    if (validation.empty()) throw ConfigError("split: validation range is empty");
    if (validation.first <= train.last) {
        throw ConfigError("split: validation range must follow the training range");
    }
}

PanelDataset::PanelDataset(std::vector<std::string> units, std::vector<std::string> variables,
                           std::vector<int> time_labels, std::vector<double> values)
    : units_(std::move(units)),
      variables_(std::move(variables)),
      time_labels_(std::move(time_labels)),
      values_(std::move(values)) {
    if (values_.size() != units_.size() * time_labels_.size() * variables_.size()) {
        throw DataError("panel: value array does not match units x times x variables");
    }
    if (variables_.size() < 2) throw DataError("panel: at least two variables are required");
    if (units_.empty()) throw DataError("panel: no units");
    for (std::size_t k = 1; k < time_labels_.size(); ++k) {
        if (time_labels_[k] != time_labels_[k - 1] + 1) {
            throw DataError("panel: time labels must be consecutive integers (gap after " +
                            std::to_string(time_labels_[k - 1]) + ")");
        }
    }
    for (std::size_t k = 0; k < values_.size(); ++k) {
        if (!std::isfinite(values_[k])) throw DataError("panel: non-finite value in data");
    }
}

long PanelDataset::time_position(int label) const noexcept {
    if (time_labels_.empty()) return -1;
    const long pos = static_cast<long>(label) - time_labels_.front();
    if (pos < 0 || pos >= static_cast<long>(time_labels_.size())) return -1;
    return pos;
}

void PanelDataset::check_lag_order(std::size_t lag) const {
    if (num_times() < lag + 2) {
        throw DataError("panel: " + std::to_string(num_times()) +
                        " time points is too short for lag order " + std::to_string(lag));
    }
}

PanelDataset slice_times(const PanelDataset& data, const TimeRange& range) {
    std::vector<int> labels;
    std::vector<std::size_t> keep;
    for (std::size_t t = 0; t < data.num_times(); ++t) {
        if (range.contains(data.time_labels()[t])) {
            labels.push_back(data.time_labels()[t]);
            keep.push_back(t);
        }
    }
    if (keep.empty()) throw DataError("panel: time slice selects no labels");
    std::vector<double> values;
    values.reserve(data.num_units() * keep.size() * data.num_vars());
    for (std::size_t u = 0; u < data.num_units(); ++u) {
        for (std::size_t t : keep) {
            const auto r = data.row(u, t);
            values.insert(values.end(), r.begin(), r.end());
        }
    }
    return PanelDataset(data.units(), data.variables(), std::move(labels), std::move(values));
}

PanelDataset parse_panel_csv(const std::string& text, const CsvSchema& schema) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) {
            header = split_line(line);
            break;
        }
    }
    if (header.empty()) throw DataError("panel csv: missing header row");

    auto find_col = [&](const std::string& name) -> std::size_t {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError("panel csv: header lacks column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t unit_col = find_col(schema.unit_column);
    const std::size_t time_col = find_col(schema.time_column);

    std::vector<std::string> var_names;
    std::vector<std::size_t> var_cols;
    if (schema.variables.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (c == unit_col || c == time_col) continue;
            var_names.push_back(header[c]);
            var_cols.push_back(c);
        }
    } else {
        for (const auto& v : schema.variables) {
            var_names.push_back(v);
            var_cols.push_back(find_col(v));
        }
    }
    if (var_names.size() < 2) throw DataError("panel csv: at least two variable columns required");

    // (unit, time) -> values
    std::map<std::string, std::map<int, std::vector<double>>> cells;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_line(line);
        if (fields.size() != header.size()) {
            throw DataError("panel csv: line " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(header.size()));
        }
        const std::string& unit = fields[unit_col];
        if (unit.empty()) throw DataError("panel csv: missing cell at " + where(line_no, header[unit_col]));
        const std::string& tstr = fields[time_col];
        int t = 0;
        {
            const auto res = std::from_chars(tstr.data(), tstr.data() + tstr.size(), t);
            if (tstr.empty()) {
                throw DataError("panel csv: missing cell at " + where(line_no, header[time_col]));
            }
            if (res.ec != std::errc() || res.ptr != tstr.data() + tstr.size()) {
                throw DataError("panel csv: time label '" + tstr + "' is not an integer at " +
                                where(line_no, header[time_col]));
            }
        }
        std::vector<double> vals(var_cols.size());
        for (std::size_t k = 0; k < var_cols.size(); ++k) {
            const std::string& f = fields[var_cols[k]];
            if (f.empty() || f == "NA" || f == "NaN" || f == "nan") {
                throw DataError("panel csv: missing cell at " + where(line_no, header[var_cols[k]]));
            }
            double v = 0.0;
            const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
            if (res.ec != std::errc() || res.ptr != f.data() + f.size() || !std::isfinite(v)) {
                throw DataError("panel csv: non-numeric value '" + f + "' at " +
                                where(line_no, header[var_cols[k]]));
            }
            vals[k] = v;
        }
        auto& per_unit = cells[unit];
        if (!per_unit.emplace(t, std::move(vals)).second) {
            throw DataError("panel csv: duplicate (unit, time) pair (" + unit + ", " +
                            std::to_string(t) + ") at line " + std::to_string(line_no));
        }
    }
    if (cells.empty()) throw DataError("panel csv: no data rows");

    std::set<int> all_times;
    for (const auto& [unit, series] : cells) {
        for (const auto& [t, v] : series) all_times.insert(t);
    }
    for (const auto& [unit, series] : cells) {
        if (series.size() == all_times.size()) continue;
        for (int t : all_times) {
            if (!series.count(t)) {
                throw DataError("panel csv: unbalanced panel, unit '" + unit + "' is missing time " +
                                std::to_string(t));
            }
        }
    }

    std::vector<std::string> units;
    std::vector<int> times(all_times.begin(), all_times.end());
    std::vector<double> values;
    values.reserve(cells.size() * times.size() * var_names.size());
    for (const auto& [unit, series] : cells) {
        units.push_back(unit);
        for (const auto& [t, v] : series) values.insert(values.end(), v.begin(), v.end());
    }
    return PanelDataset(std::move(units), std::move(var_names), std::move(times), std::move(values));
}

PanelDataset load_panel_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("panel csv: cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_panel_csv(ss.str(), schema);
}

std::string format_panel_csv(const PanelDataset& data) {
    std::string out = "unit,time";
    for (const auto& v : data.variables()) out += "," + v;
    out += "\n";
    for (std::size_t c = 0; c < data.num_units(); ++c) {
        for (std::size_t t = 0; t < data.num_times(); ++t) {
            out += data.units()[c];
            out += ",";
            out += std::to_string(data.time_labels()[t]);
            for (double v : data.row(c, t)) {
                out += ",";
                out += format_double(v);
            }
            out += "\n";
        }
    }
    return out;
}

void write_panel_csv(const std::filesystem::path& path, const PanelDataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("panel csv: cannot write '" + path.string() + "'");
    out << format_panel_csv(data);
}

NormalizationStats NormalizationStats::identity(std::vector<std::string> variables) {
    NormalizationStats s;
    s.mean.assign(variables.size(), 0.0);
    s.std.assign(variables.size(), 1.0);
    s.variables = std::move(variables);
    return s;
}

NormalizationStats fit_normalization(const PanelDataset& data, const SplitSpec& split) {
    const std::size_t n_vars = data.num_vars();
    std::vector<std::size_t> rows;
    for (std::size_t t = 0; t < data.num_times(); ++t) {
        if (split.train.contains(data.time_labels()[t])) rows.push_back(t);
    }
    if (rows.empty()) throw DataError("normalization: training range contains no time points");

    NormalizationStats stats;
    stats.variables = data.variables();
    stats.mean.assign(n_vars, 0.0);
    stats.std.assign(n_vars, 0.0);
    const double count = static_cast<double>(rows.size() * data.num_units());
    for (std::size_t c = 0; c < data.num_units(); ++c) {
        for (std::size_t t : rows) {
            const auto r = data.row(c, t);
            for (std::size_t i = 0; i < n_vars; ++i) stats.mean[i] += r[i];
        }
    }
    for (auto& m : stats.mean) m /= count;
    for (std::size_t c = 0; c < data.num_units(); ++c) {
        for (std::size_t t : rows) {
            const auto r = data.row(c, t);
            for (std::size_t i = 0; i < n_vars; ++i) {
                const double d = r[i] - stats.mean[i];
                stats.std[i] += d * d;
            }
        }
    }
    for (std::size_t i = 0; i < n_vars; ++i) {
        stats.std[i] = std::sqrt(stats.std[i] / count);
        if (!(stats.std[i] > 0.0)) {
            throw DataError("normalization: variable '" + data.variables()[i] +
                            "' has zero variance on the training range");
        }
    }
    return stats;
}

namespace {

PanelDataset transform(const PanelDataset& data, const NormalizationStats& stats, bool forward) {
    const std::size_t n_vars = data.num_vars();
    if (stats.mean.size() != n_vars || stats.std.size() != n_vars) {
        throw DataError("normalization: stats cover " + std::to_string(stats.mean.size()) +
                        " variables, data has " + std::to_string(n_vars));
    }
    std::vector<double> values = data.values();
    for (std::size_t k = 0; k < values.size(); ++k) {
        const std::size_t i = k % n_vars;
        values[k] = forward ? (values[k] - stats.mean[i]) / stats.std[i]
                            : values[k] * stats.std[i] + stats.mean[i];
    }
    return PanelDataset(data.units(), data.variables(), data.time_labels(), std::move(values));
}

}  // namespace

PanelDataset apply_normalization(const PanelDataset& data, const NormalizationStats& stats) {
    return transform(data, stats, true);
}

PanelDataset invert_normalization(const PanelDataset& data, const NormalizationStats& stats) {
    return transform(data, stats, false);
}

nlohmann::json stats_to_json(const NormalizationStats& stats) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t i = 0; i < stats.variables.size(); ++i) {
        j[stats.variables[i]] = {{"mean", stats.mean[i]}, {"std", stats.std[i]}};
    }
    j["_meta"] = {{"std_convention", kStdConvention},
                  {"order", stats.variables}};
    return j;
}

NormalizationStats stats_from_json(const nlohmann::json& j) {
    NormalizationStats s;
    try {
        std::vector<std::string> order;
        if (j.contains("_meta") && j["_meta"].contains("order")) {
            order = j["_meta"]["order"].get<std::vector<std::string>>();
        } else {
            for (const auto& [k, v] : j.items()) {
                if (k != "_meta") order.push_back(k);
            }
        }
        for (const auto& name : order) {
            s.variables.push_back(name);
            s.mean.push_back(j.at(name).at("mean").get<double>());
            s.std.push_back(j.at(name).at("std").get<double>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("normalization stats json: ") + e.what());
    }
    return s;
}

WindowSet enumerate_windows(const PanelDataset& data, std::size_t lags, const TimeRange& range) {
    if (lags < 1) throw ConfigError("enumerate_windows: lag order must be >= 1");
    WindowSet out;
    const std::size_t n_vars = data.num_vars();
    for (std::size_t c = 0; c < data.num_units(); ++c) {
        for (std::size_t t = 0; t < data.num_times(); ++t) {
            const int label = data.time_labels()[t];
            if (!range.contains(label)) continue;
            if (t < lags) {
                ++out.skipped;
                continue;
            }
            LagWindow w;
            w.unit = c;
            w.target_time = t;
            w.target_label = label;
            w.num_vars = n_vars;
            w.lags = lags;
            w.lagged.resize(lags * n_vars);
            for (std::size_t l = 1; l <= lags; ++l) {
                const auto r = data.row(c, t - l);
                std::copy(r.begin(), r.end(), w.lagged.begin() + static_cast<long>((l - 1) * n_vars));
            }
            const auto r = data.row(c, t);
            w.target.assign(r.begin(), r.end());
            out.windows.push_back(std::move(w));
        }
    }
    return out;
}

}  // namespace navar
