#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#ifndef NAVAR_CLI_PATH
#error "NAVAR_CLI_PATH must name the navar executable"
#endif

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string output;
};

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "navar_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run navar(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + NAVAR_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = slurp(log);
    return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

}  // namespace

TEST_CASE("cli: exit codes") {
    const auto dir = scratch("codes");
    const auto log = dir / "log.txt";

    SUBCASE("missing CSV is a data error naming the path") {
        const auto missing = dir / "nope.csv";
        const auto r = navar("train --data " + q(missing) + " --seed 1 --out " + q(dir), log);
        CHECK(r.code == 2);
        CHECK(r.output.find("nope.csv") != std::string::npos);
    }
    SUBCASE("unknown config key is a configuration error") {
        write_file(dir / "run.json", R"({"data": "x.csv", "sed": 3})");
        const auto r = navar("train --config " + q(dir / "run.json") + " --out " + q(dir), log);
        CHECK(r.code == 4);
        CHECK(r.output.find("sed") != std::string::npos);
    }
    SUBCASE("missing seed is a configuration error") {
        const auto r = navar("synth --out " + q(dir), log);
        CHECK(r.code == 4);
    }
    SUBCASE("bad option value is a configuration error") {
        const auto r = navar("synth --seed 1 --rho 1.5 --out " + q(dir), log);
        CHECK(r.code == 4);
    }
    SUBCASE("explosive simulation is a numeric failure") {
        const auto r = navar("synth --seed 1 --strength 1e7 --out " + q(dir), log);
        CHECK(r.code == 3);
        CHECK(r.output.find("explosive") != std::string::npos);
    }
    SUBCASE("malformed CSV is a data error") {
        write_file(dir / "bad.csv", "unit,time,a,b\nu,1,0.5,1\nu,2,oops,2\n");
        const auto r = navar("train --data " + q(dir / "bad.csv") + " --seed 1 --out " + q(dir), log);
        CHECK(r.code == 2);
        CHECK(r.output.find("line 3") != std::string::npos);
    }
}

TEST_CASE("cli: synth, train, scores, test and report round trip") {
    const auto dir = scratch("pipeline");
    const auto log = dir / "log.txt";
    const auto data = dir / "data";
    REQUIRE(navar("synth --regime basic --num-vars 4 --units 6 --length 50 --seed 3 --out " + q(data), log).code == 0);
    CHECK(fs::exists(data / "panel.csv"));
    CHECK(fs::exists(data / "graph.json"));
    CHECK(fs::exists(data / "synth.meta.json"));

    const std::string common = "--data " + q(data / "panel.csv") + " --validation-length 10 --seed 7 ";
    const std::string train_args = common + "--epochs 3 --lags 2 --hidden 8 --batch-size 32 ";
    const auto run_a = dir / "a";
    const auto run_b = dir / "b";
    REQUIRE(navar("train " + train_args + "--out " + q(run_a), log).code == 0);
    REQUIRE(navar("train " + train_args + "--out " + q(run_b), log).code == 0);
    CHECK(slurp(run_a / "checkpoint.json") == slurp(run_b / "checkpoint.json"));
    CHECK(slurp(run_a / "loss.csv") == slurp(run_b / "loss.csv"));
    CHECK(slurp(run_a / "train.meta.json") == slurp(run_b / "train.meta.json"));

    const auto meta = nlohmann::json::parse(slurp(run_a / "train.meta.json"));
    CHECK(meta["seed"] == 7);
    CHECK(meta["format_version"] == 1);
    CHECK(meta.contains("config_hash"));
    CHECK(meta.contains("data_hash"));

    const std::string ckpt = "--checkpoint " + q(run_a / "checkpoint.json") + " ";
    REQUIRE(navar("scores " + common + ckpt + "--diagonal zeroed --out " + q(run_a), log).code == 0);
    CHECK(nlohmann::json::accept(slurp(run_a / "scores.json")));
    const std::string csv = slurp(run_a / "scores.csv");
    CHECK(csv.rfind("target,y0,y1,y2,y3\n", 0) == 0);
    std::size_t lines = 0;
    for (char ch : csv) lines += ch == '\n';
    CHECK(lines == 5);

    REQUIRE(navar("test " + common + ckpt + "--all --out " + q(run_a), log).code == 0);
    const auto report = nlohmann::json::parse(slurp(run_a / "report.json"));
    CHECK(report["rows"].size() == 12);
    const std::string first_report = slurp(run_a / "report.csv");
    REQUIRE(navar("test " + common + ckpt + "--all --workers 2 --out " + q(run_b), log).code == 0);
    CHECK(slurp(run_b / "report.csv") == first_report);

    const auto edge_dir = dir / "edge";
    const auto r = navar("test " + common + ckpt + "--edge 'y0->y1' --edge '2->3' --out " + q(edge_dir), log);
    REQUIRE(r.code == 0);
    const std::string table = slurp(edge_dir / "table.txt");
    CHECK(table.find("y0") != std::string::npos);
    CHECK(table.find("y1") != std::string::npos);
    CHECK(nlohmann::json::parse(slurp(edge_dir / "report.json"))["rows"].size() == 2);

    CHECK(navar("test " + common + ckpt + "--edge 'y0->nope' --out " + q(edge_dir), log).code == 4);

    REQUIRE(navar("report --report " + q(run_a / "report.json") + " --graph " + q(data / "graph.json") +
                      " --edge 'y1->y0' --out " + q(run_a),
                  log)
                .code == 0);
    const auto metrics = nlohmann::json::parse(slurp(run_a / "metrics.json"));
    CHECK(metrics["metrics"].contains("auroc"));
    CHECK(metrics["metrics"]["edges"] == 12);
}

TEST_CASE("cli: 16 variables give a 16 x 16 score matrix and 240 tested edges") {
    const auto dir = scratch("wide");
    const auto log = dir / "log.txt";
    REQUIRE(navar("synth --num-vars 16 --num-edges 20 --units 4 --length 50 --seed 2 --out " + q(dir), log).code == 0);
    const std::string common =
        "--data " + q(dir / "panel.csv") + " --validation-length 10 --seed 1 ";
    REQUIRE(navar("train " + common + "--epochs 1 --lags 2 --hidden 4 --out " + q(dir), log).code == 0);
    const std::string ckpt = "--checkpoint " + q(dir / "checkpoint.json") + " ";
    REQUIRE(navar("scores " + common + ckpt + "--out " + q(dir), log).code == 0);
    CHECK(nlohmann::json::accept(slurp(dir / "scores.json")));
    const std::string csv = slurp(dir / "scores.csv");
    std::size_t lines = 0;
    for (char ch : csv) lines += ch == '\n';
    CHECK(lines == 17);
    REQUIRE(navar("test " + common + ckpt + "--all --out " + q(dir), log).code == 0);
    CHECK(nlohmann::json::parse(slurp(dir / "report.json"))["rows"].size() == 240);
}
