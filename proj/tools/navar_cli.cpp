// navar: batch command-line front end.
//
//   navar train  --config run.json --seed 1 --out runs/a
//   navar scores --config run.json --checkpoint runs/a/checkpoint.json --out runs/a
//   navar test   --config run.json --checkpoint runs/a/checkpoint.json --all --out runs/a
//   navar synth  --regime basic --seed 3 --out data/
//   navar report --report runs/a/report.json --graph data/graph.json --out runs/a
//
// Exit codes: 0 ok, 2 data error, 3 numeric failure, 4 configuration error.

#include "navar/common.hpp"
#include "navar/model.hpp"
#include "navar/necessity.hpp"
#include "navar/panel.hpp"
#include "navar/pipeline.hpp"
#include "navar/synth.hpp"
#include "navar/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

// Command-line values; every optional overrides the matching config field.
struct Overrides {
    std::string config_path;
    std::optional<std::string> data;
    std::optional<std::string> unit_column;
    std::optional<std::string> time_column;
    std::vector<std::string> variables;
    std::optional<std::string> train_range;
    std::optional<std::string> validation_range;
    std::optional<int> validation_length;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;

    std::optional<std::size_t> lags, hidden, batch_size, epochs;
    std::optional<double> dropout, weight_decay, lambda, learning_rate;

    std::optional<std::string> statistic, diagonal;
    std::optional<std::string> correction;
    std::optional<double> alpha;
    std::optional<std::size_t> bandwidth;
    bool raw_units = false;

    std::optional<std::string> regime;
    std::optional<std::size_t> num_vars, units, length, num_edges, max_lag;
    std::optional<double> noise, rho, redundancy, strength;

    std::optional<std::string> checkpoint;
    std::vector<std::string> edges;
    bool all = false;
    std::optional<int> workers;

    std::optional<std::string> report;
    std::optional<std::string> graph;
};

json read_json_file(const fs::path& path, bool config) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        const std::string msg = "cannot open '" + path.string() + "'";
        if (config) throw navar::ConfigError("config: " + msg);
        throw navar::DataError(msg);
    }
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        const std::string msg = "'" + path.string() + "' is not valid JSON: " + e.what();
        if (config) throw navar::ConfigError("config: " + msg);
        throw navar::DataError(msg);
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw navar::DataError("cannot write '" + path.string() + "'");
    out << text;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string file_hash(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return navar::hex64(navar::fnv1a(ss.str()));
}

navar::TimeRange parse_range(const std::string& text, const char* what) {
    const auto colon = text.find(':');
    try {
        if (colon == std::string::npos) throw std::invalid_argument("no colon");
        std::size_t used = 0;
        const int a = std::stoi(text.substr(0, colon), &used);
        if (used != colon) throw std::invalid_argument("trailing");
        const std::string rest = text.substr(colon + 1);
        const int b = std::stoi(rest, &used);
        if (used != rest.size()) throw std::invalid_argument("trailing");
        return {a, b};
    } catch (const std::exception&) {
        throw navar::ConfigError(std::string("config: ") + what + " must look like FIRST:LAST, got '" +
                                 text + "'");
    }
}

navar::TimeRange range_from_json(const json& j, const char* what) {
    if (j.is_string()) return parse_range(j.get<std::string>(), what);
    if (j.is_array() && j.size() == 2 && j[0].is_number_integer() && j[1].is_number_integer()) {
        return {j[0].get<int>(), j[1].get<int>()};
    }
    throw navar::ConfigError(std::string("config: ") + what + " must be [first, last] or \"first:last\"");
}

// The merged run configuration. Config file first, then command-line overrides.
struct RunConfig {
    json doc = json::object();
    std::optional<fs::path> data;
    navar::CsvSchema schema;
    std::optional<navar::TimeRange> train_range;
    std::optional<navar::TimeRange> validation_range;
    std::optional<int> validation_length;
    navar::TrainConfig train;
    bool seed_given = false;
    navar::ScoreOptions score;
    navar::ScreenOptions screen;
    navar::synth::DGPConfig dgp;
    fs::path out = ".";

    // Resolved split for a loaded panel.
    navar::SplitSpec split_for(const navar::PanelDataset& data) const {
        navar::SplitSpec split;
        if (train_range && validation_range) {
            split = {*train_range, *validation_range};
        } else if (validation_range) {
            split = {{data.time_labels().front(), validation_range->first - 1}, *validation_range};
        } else {
            split = navar::tail_split(data, validation_length.value_or(5));
            if (train_range) split.train = *train_range;
        }
        split.validate();
        return split;
    }

    json describe() const {
        json j;
        j["data"] = data ? json(data->generic_string()) : json(nullptr);
        j["schema"] = {{"unit_column", schema.unit_column},
                       {"time_column", schema.time_column},
                       {"variables", schema.variables}};
        j["train_range"] = train_range ? json::array({train_range->first, train_range->last}) : json(nullptr);
        j["validation_range"] =
            validation_range ? json::array({validation_range->first, validation_range->last}) : json(nullptr);
        j["validation_length"] = validation_length ? json(*validation_length) : json(nullptr);
        j["train"] = navar::train_config_to_json(train);
        j["scores"] = {{"statistic", navar::to_string(score.statistic)},
                       {"diagonal", navar::to_string(score.diagonal)}};
        j["test"] = {{"alpha", screen.alpha},
                     {"correction", navar::to_string(screen.correction)},
                     {"bandwidth", screen.bandwidth ? json(*screen.bandwidth) : json("auto")},
                     {"raw_units", screen.raw_units}};
        return j;
    }
};

template <class T>
T get_field(const json& j, const char* key, const char* section) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw navar::ConfigError(std::string("config: bad value for ") + section + "." + key);
    }
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* section) {
    for (const auto& [k, _] : j.items()) {
        bool known = false;
        for (const char* key : keys) known = known || k == key;
        if (!known) throw navar::ConfigError(std::string("config: unknown key '") + k + "' in " + section);
    }
}

RunConfig build_config(const Overrides& o) {
    RunConfig rc;
    if (!o.config_path.empty()) {
        rc.doc = read_json_file(o.config_path, true);
        if (!rc.doc.is_object()) throw navar::ConfigError("config: top level must be an object");
    }
    const json& d = rc.doc;
    reject_unknown(d, {"data", "schema", "split", "train", "scores", "test", "synth", "seed", "output_dir"},
                   "config");

    if (d.contains("data")) rc.data = get_field<std::string>(d, "data", "config");
    if (d.contains("schema")) {
        const json& s = d["schema"];
        reject_unknown(s, {"unit_column", "time_column", "variables"}, "schema");
        if (s.contains("unit_column")) rc.schema.unit_column = get_field<std::string>(s, "unit_column", "schema");
        if (s.contains("time_column")) rc.schema.time_column = get_field<std::string>(s, "time_column", "schema");
        if (s.contains("variables")) rc.schema.variables = get_field<std::vector<std::string>>(s, "variables", "schema");
    }
    if (d.contains("split")) {
        const json& s = d["split"];
        reject_unknown(s, {"train", "validation", "validation_length"}, "split");
        if (s.contains("train")) rc.train_range = range_from_json(s["train"], "split.train");
        if (s.contains("validation")) rc.validation_range = range_from_json(s["validation"], "split.validation");
        if (s.contains("validation_length")) rc.validation_length = get_field<int>(s, "validation_length", "split");
    }
    if (d.contains("train")) {
        try {
            rc.train = navar::train_config_from_json(d["train"]);
        } catch (const json::exception& e) {
            throw navar::ConfigError(std::string("config: train: ") + e.what());
        }
    }
    if (d.contains("seed")) {
        rc.train.seed = get_field<std::uint64_t>(d, "seed", "config");
        rc.seed_given = true;
    }
    if (d.contains("scores")) {
        const json& s = d["scores"];
        reject_unknown(s, {"statistic", "diagonal"}, "scores");
        if (s.contains("statistic")) rc.score.statistic = navar::parse_score_statistic(get_field<std::string>(s, "statistic", "scores"));
        if (s.contains("diagonal")) rc.score.diagonal = navar::parse_diagonal_policy(get_field<std::string>(s, "diagonal", "scores"));
    }
    if (d.contains("test")) {
        const json& s = d["test"];
        reject_unknown(s, {"alpha", "correction", "bandwidth", "raw_units"}, "test");
        if (s.contains("alpha")) rc.screen.alpha = get_field<double>(s, "alpha", "test");
        if (s.contains("correction")) rc.screen.correction = navar::parse_correction(get_field<std::string>(s, "correction", "test"));
        if (s.contains("bandwidth") && !(s["bandwidth"].is_string() && s["bandwidth"] == "auto")) {
            rc.screen.bandwidth = get_field<std::size_t>(s, "bandwidth", "test");
        }
        if (s.contains("raw_units")) rc.screen.raw_units = get_field<bool>(s, "raw_units", "test");
    }
    if (d.contains("synth")) {
        try {
            rc.dgp = navar::synth::dgp_config_from_json(d["synth"]);
            if (d["synth"].contains("seed") && !d.contains("seed")) {
                rc.train.seed = rc.dgp.seed;
                rc.seed_given = true;
            }
        } catch (const json::exception& e) {
            throw navar::ConfigError(std::string("config: synth: ") + e.what());
        }
    }
    if (d.contains("output_dir")) rc.out = get_field<std::string>(d, "output_dir", "config");

    // Command-line overrides.
    if (o.data) rc.data = *o.data;
    if (o.unit_column) rc.schema.unit_column = *o.unit_column;
    if (o.time_column) rc.schema.time_column = *o.time_column;
    if (!o.variables.empty()) rc.schema.variables = o.variables;
    if (o.train_range) rc.train_range = parse_range(*o.train_range, "--train-range");
    if (o.validation_range) rc.validation_range = parse_range(*o.validation_range, "--validation-range");
    if (o.validation_length) rc.validation_length = *o.validation_length;
    if (o.seed) {
        rc.train.seed = *o.seed;
        rc.seed_given = true;
    }
    if (o.lags) rc.train.lags = *o.lags;
    if (o.hidden) rc.train.hidden = *o.hidden;
    if (o.batch_size) rc.train.batch_size = *o.batch_size;
    if (o.epochs) rc.train.epochs = *o.epochs;
    if (o.dropout) rc.train.dropout = *o.dropout;
    if (o.weight_decay) rc.train.weight_decay = *o.weight_decay;
    if (o.lambda) rc.train.lambda_sparsity = *o.lambda;
    if (o.learning_rate) rc.train.learning_rate = *o.learning_rate;
    if (o.statistic) rc.score.statistic = navar::parse_score_statistic(*o.statistic);
    if (o.diagonal) rc.score.diagonal = navar::parse_diagonal_policy(*o.diagonal);
    if (o.correction) rc.screen.correction = navar::parse_correction(*o.correction);
    if (o.alpha) rc.screen.alpha = *o.alpha;
    if (o.bandwidth) rc.screen.bandwidth = *o.bandwidth;
    if (o.raw_units) rc.screen.raw_units = true;
    if (o.regime) rc.dgp.regime = navar::synth::parse_regime(*o.regime);
    if (o.num_vars) rc.dgp.num_vars = *o.num_vars;
    if (o.units) rc.dgp.units = *o.units;
    if (o.length) rc.dgp.length = *o.length;
    if (o.num_edges) rc.dgp.num_edges = *o.num_edges;
    if (o.max_lag) rc.dgp.max_lag = *o.max_lag;
    if (o.noise) rc.dgp.noise_std = *o.noise;
    if (o.rho) rc.dgp.rho = *o.rho;
    if (o.redundancy) rc.dgp.redundancy = *o.redundancy;
    if (o.strength) rc.dgp.edge_strength = *o.strength;
    if (rc.seed_given) rc.dgp.seed = rc.train.seed;
    if (o.out) rc.out = *o.out;

    if (!(rc.screen.alpha > 0.0 && rc.screen.alpha < 1.0)) throw navar::ConfigError("config: alpha must lie in (0, 1)");
    rc.train.validate();
    return rc;
}

void require_seed(const RunConfig& rc) {
    if (!rc.seed_given) throw navar::ConfigError("config: a seed is required (--seed or \"seed\")");
}

const fs::path& require_data(const RunConfig& rc) {
    if (!rc.data) throw navar::ConfigError("config: no data file given (--data or \"data\")");
    if (!fs::exists(*rc.data)) throw navar::DataError("data file not found: '" + rc.data->string() + "'");
    return *rc.data;
}

json sidecar(const std::string& command, const RunConfig& rc, const json& extra) {
    json cfg = rc.describe();
    json j;
    j["tool"] = "navar";
    j["command"] = command;
    j["format_version"] = kFormatVersion;
    j["seed"] = rc.train.seed;
    j["config"] = cfg;
    j["config_hash"] = navar::hex64(navar::fnv1a(cfg.dump()));
    if (rc.data && fs::exists(*rc.data)) j["data_hash"] = file_hash(*rc.data);
    for (const auto& [k, v] : extra.items()) j[k] = v;
    return j;
}

navar::EdgeMask parse_edge(const std::string& text, const std::vector<std::string>& variables) {
    const auto arrow = text.find("->");
    if (arrow == std::string::npos) {
        throw navar::ConfigError("--edge must look like SOURCE->TARGET, got '" + text + "'");
    }
    auto lookup = [&](const std::string& name) -> std::size_t {
        for (std::size_t k = 0; k < variables.size(); ++k) {
            if (variables[k] == name) return k;
        }
        try {
            std::size_t used = 0;
            const unsigned long v = std::stoul(name, &used);
            if (used == name.size() && v < variables.size()) return v;
        } catch (const std::exception&) {
        }
        throw navar::ConfigError("--edge: unknown variable '" + name + "'");
    };
    navar::EdgeMask e;
    e.source = lookup(text.substr(0, arrow));
    e.target = lookup(text.substr(arrow + 2));
    if (e.source == e.target) throw navar::ConfigError("--edge: self edges are not tested");
    return e;
}

int cmd_train(const RunConfig& rc) {
    require_seed(rc);
    const auto data = navar::load_panel_csv(require_data(rc), rc.schema);
    const auto split = rc.split_for(data);
    const auto result = navar::train(data, split, rc.train);

    const fs::path ckpt = rc.out / "checkpoint.json";
    write_text(ckpt, navar::serialize_model(result.model));
    write_text(rc.out / "loss.csv", navar::loss_reports_csv(result.history));

    json residuals = json::array();
    if (!result.history.empty()) {
        const auto& last = result.history.back();
        for (std::size_t i = 0; i < data.num_vars(); ++i) {
            residuals.push_back({{"variable", data.variables()[i]},
                                 {"mean", last.residual_mean[i]},
                                 {"var", last.residual_var[i]}});
        }
    }
    json extra;
    extra["split"] = {{"train", {split.train.first, split.train.last}},
                      {"validation", {split.validation.first, split.validation.last}}};
    extra["train_windows"] = result.train_windows;
    extra["skipped_windows"] = result.skipped_windows;
    extra["mse_convention"] = navar::kMseConvention;
    extra["sparsity_convention"] = navar::kSparsityConvention;
    extra["final_residuals"] = residuals;
    extra["outputs"] = {{"checkpoint", "checkpoint.json"},
                        {"checkpoint_hash", file_hash(ckpt)},
                        {"loss", "loss.csv"}};
    write_text(rc.out / "train.meta.json", dump(sidecar("train", rc, extra)));
    std::cout << "trained " << result.history.size() << " epochs on " << result.train_windows
              << " windows; checkpoint " << ckpt.generic_string() << "\n";
    return 0;
}

struct Loaded {
    navar::NavarModel model;
    navar::PanelDataset normalized;
    navar::SplitSpec split;
};

Loaded load_for_eval(const RunConfig& rc, const std::optional<std::string>& checkpoint) {
    if (!checkpoint) throw navar::ConfigError("--checkpoint is required");
    auto model = navar::load_model(*checkpoint);
    const auto data = navar::load_panel_csv(require_data(rc), rc.schema);
    if (data.variables() != model.variables()) {
        throw navar::DataError("data variables do not match the checkpoint");
    }
    const auto split = rc.split_for(data);
    auto normalized = navar::apply_normalization(data, model.norm_stats());
    return {std::move(model), std::move(normalized), split};
}

int cmd_scores(const RunConfig& rc, const Overrides& o) {
    const auto loaded = load_for_eval(rc, o.checkpoint);
    const auto scores = navar::score_model(loaded.model, loaded.normalized, loaded.split, rc.score);
    const auto& vars = loaded.model.variables();
    write_text(rc.out / "scores.csv", navar::scores_to_csv(scores, vars));
    write_text(rc.out / "scores.json", dump(navar::scores_to_json(scores, vars)));
    json extra;
    extra["checkpoint_hash"] = file_hash(*o.checkpoint);
    extra["outputs"] = {"scores.csv", "scores.json"};
    write_text(rc.out / "scores.meta.json", dump(sidecar("scores", rc, extra)));
    std::cout << "wrote " << vars.size() << "x" << vars.size() << " score matrix to "
              << (rc.out / "scores.csv").generic_string() << "\n";
    return 0;
}

int cmd_test(const RunConfig& rc, const Overrides& o) {
    if (o.all == !o.edges.empty()) throw navar::ConfigError("test: give either --all or one or more --edge");
#ifdef _OPENMP
    if (o.workers) {
        if (*o.workers < 1) throw navar::ConfigError("--workers must be >= 1");
        omp_set_num_threads(*o.workers);
    }
#endif
    const auto loaded = load_for_eval(rc, o.checkpoint);
    const auto& vars = loaded.model.variables();
    navar::ScreenOptions opts = rc.screen;
    for (const auto& e : o.edges) opts.edges.push_back(parse_edge(e, vars));
    const auto scores = navar::score_model(loaded.model, loaded.normalized, loaded.split, rc.score);
    const auto report = navar::screen_all_edges(loaded.model, loaded.normalized, loaded.split, scores, opts);

    write_text(rc.out / "report.csv", navar::report_to_csv(report));
    write_text(rc.out / "report.json", dump(navar::report_to_json(report)));
    json outputs = {"report.csv", "report.json"};
    if (!o.edges.empty()) {
        write_text(rc.out / "table.txt", navar::render_measure_table(report.rows, vars));
        outputs.push_back("table.txt");
    }
    std::size_t necessary = 0;
    for (const auto& r : report.rows) necessary += r.necessary ? 1 : 0;
    json extra;
    extra["checkpoint_hash"] = file_hash(*o.checkpoint);
    extra["split"] = {{"train", {loaded.split.train.first, loaded.split.train.last}},
                      {"validation", {loaded.split.validation.first, loaded.split.validation.last}}};
    extra["edges_tested"] = report.rows.size();
    extra["outputs"] = outputs;
    write_text(rc.out / "report.meta.json", dump(sidecar("test", rc, extra)));
    if (!o.edges.empty()) std::cout << navar::render_measure_table(report.rows, vars);
    std::cout << report.rows.size() << " edges tested, " << necessary << " forecast-necessary after "
              << navar::to_string(report.correction) << "\n";
    return 0;
}

int cmd_synth(const RunConfig& rc) {
    require_seed(rc);
    const auto gen = navar::synth::generate(rc.dgp);
    write_text(rc.out / "panel.csv", navar::format_panel_csv(gen.data));
    write_text(rc.out / "graph.json", dump(navar::synth::graph_to_json(gen.graph)));
    json meta;
    meta["tool"] = "navar";
    meta["command"] = "synth";
    meta["format_version"] = kFormatVersion;
    meta["seed"] = rc.dgp.seed;
    const json cfg = navar::synth::dgp_config_to_json(rc.dgp);
    meta["config"] = cfg;
    meta["config_hash"] = navar::hex64(navar::fnv1a(cfg.dump()));
    meta["burn_in_discarded"] = rc.dgp.burn_in;
    meta["outputs"] = {{"panel", "panel.csv"},
                       {"panel_hash", file_hash(rc.out / "panel.csv")},
                       {"graph", "graph.json"}};
    write_text(rc.out / "synth.meta.json", dump(meta));
    std::cout << "generated " << gen.data.num_units() << " units x " << gen.data.num_times()
              << " times x " << gen.data.num_vars() << " variables in "
              << (rc.out / "panel.csv").generic_string() << "\n";
    return 0;
}

int cmd_report(const RunConfig& rc, const Overrides& o) {
    if (!o.report) throw navar::ConfigError("report: --report is required");
    const auto report = navar::report_from_json(read_json_file(*o.report, false));
    json out;
    out["tool"] = "navar";
    out["format_version"] = kFormatVersion;
    out["report_hash"] = file_hash(*o.report);
    if (o.graph) {
        const auto graph = navar::synth::graph_from_json(read_json_file(*o.graph, false));
        const auto oracle = navar::synth::oracle_necessity(graph);
        const auto metrics = navar::synth::evaluate_recovery(report, oracle);
        out["graph_hash"] = file_hash(*o.graph);
        out["metrics"] = navar::synth::metrics_to_json(metrics);
    }
    std::vector<navar::EdgeScreenRow> picked;
    for (const auto& e : o.edges) {
        const auto mask = parse_edge(e, report.variables);
        for (const auto& r : report.rows) {
            if (r.edge.target == mask.target && r.edge.source == mask.source) picked.push_back(r);
        }
    }
    if (!picked.empty()) {
        const std::string table = navar::render_measure_table(picked, report.variables);
        write_text(rc.out / "table.txt", table);
        std::cout << table;
    }
    write_text(rc.out / "metrics.json", dump(out));
    std::cout << "wrote " << (rc.out / "metrics.json").generic_string() << "\n";
    return 0;
}

void add_run_options(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--data", o.data, "panel CSV");
    cmd->add_option("--unit-column", o.unit_column);
    cmd->add_option("--time-column", o.time_column);
    cmd->add_option("--variables", o.variables, "variable columns, in order")->delimiter(',');
    cmd->add_option("--train-range", o.train_range, "FIRST:LAST training labels");
    cmd->add_option("--validation-range", o.validation_range, "FIRST:LAST validation labels");
    cmd->add_option("--validation-length", o.validation_length, "last K labels for validation (default 5)");
    cmd->add_option("--seed", o.seed);
    cmd->add_option("--out", o.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"NAVAR causal scores and forecast-necessity tests for panel data"};
    app.require_subcommand(1);
    Overrides o;

    auto* train = app.add_subcommand("train", "fit a NAVAR model and write a checkpoint");
    add_run_options(train, o);
    train->add_option("--lags", o.lags);
    train->add_option("--hidden", o.hidden);
    train->add_option("--batch-size", o.batch_size);
    train->add_option("--epochs", o.epochs);
    train->add_option("--dropout", o.dropout);
    train->add_option("--weight-decay", o.weight_decay);
    train->add_option("--lambda", o.lambda, "sparsity penalty weight");
    train->add_option("--learning-rate", o.learning_rate);

    auto* scores = app.add_subcommand("scores", "causal score matrix of a checkpoint");
    add_run_options(scores, o);
    scores->add_option("--checkpoint", o.checkpoint)->required();
    scores->add_option("--statistic", o.statistic, "variance | std");
    scores->add_option("--diagonal", o.diagonal, "raw | zeroed");

    auto* test = app.add_subcommand("test", "ablation and DM forecast-necessity tests");
    add_run_options(test, o);
    test->add_option("--checkpoint", o.checkpoint)->required();
    test->add_option("--edge", o.edges, "SOURCE->TARGET, by name or index; repeatable");
    test->add_flag("--all", o.all, "every ordered pair of distinct variables");
    test->add_option("--correction", o.correction, "none | bonferroni | bh");
    test->add_option("--alpha", o.alpha);
    test->add_option("--bandwidth", o.bandwidth, "HAC lag truncation (default: plug-in)");
    test->add_flag("--raw-units", o.raw_units, "report losses in original units");
    test->add_option("--workers", o.workers, "threads for --all");
    test->add_option("--statistic", o.statistic, "variance | std");

    auto* synth = app.add_subcommand("synth", "generate a synthetic panel with known graph");
    synth->add_option("--config", o.config_path, "JSON run configuration (\"synth\" section)")
        ->check(CLI::ExistingFile);
    synth->add_option("--regime", o.regime, "basic | persistent | redundant_pair");
    synth->add_option("--num-vars", o.num_vars);
    synth->add_option("--units", o.units);
    synth->add_option("--length", o.length);
    synth->add_option("--num-edges", o.num_edges);
    synth->add_option("--max-lag", o.max_lag);
    synth->add_option("--noise", o.noise);
    synth->add_option("--rho", o.rho);
    synth->add_option("--redundancy", o.redundancy);
    synth->add_option("--strength", o.strength);
    synth->add_option("--seed", o.seed);
    synth->add_option("--out", o.out, "output directory");

    auto* report = app.add_subcommand("report", "recovery metrics and measure tables from a report");
    report->add_option("--report", o.report, "report.json from `test`")->required();
    report->add_option("--graph", o.graph, "graph.json from `synth`");
    report->add_option("--edge", o.edges, "SOURCE->TARGET rows to tabulate; repeatable");
    report->add_option("--out", o.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 4;
    }

    try {
        const RunConfig rc = build_config(o);
        if (*train) return cmd_train(rc);
        if (*scores) return cmd_scores(rc, o);
        if (*test) return cmd_test(rc, o);
        if (*synth) return cmd_synth(rc);
        if (*report) return cmd_report(rc, o);
    } catch (const navar::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const navar::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const navar::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
