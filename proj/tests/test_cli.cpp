#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace std::string_literals;
namespace fs = std::filesystem;

namespace {

std::string bin() {
    const char* b = std::getenv("EAGLE_BIN");
    REQUIRE(b != nullptr);
    return b;
}

std::string work_dir() {
    static std::string dir = [] {
        std::string d = (fs::temp_directory_path() / "eagle_cli").string();
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run(const std::string& args, const std::string& stdout_file = "") {
    std::string redirect = stdout_file.empty() ? " >/dev/null 2>&1"
                                               : " >" + stdout_file + " 2>/dev/null";
    int rc = std::system((bin() + " " + args + redirect).c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& body) {
    std::ofstream out(path);
    out << body;
}

}  // namespace

TEST_CASE("full command chain from synthetic data to risk export") {
    std::string d = work_dir();
    write_file(d + "/synth.json", R"({"n_regions":4,"n_days":60,"base_volume":4})");
    write_file(d + "/config.json", R"({
        "model": {"d_model":8,"encoder_layers":1,"encoder_heads":2,
                  "gat_layers":1,"gat_heads":2,"head_hidden":8},
        "train": {"epochs":2,"seeds":[0,1]}
    })");

    CHECK(run("synth --config " + d + "/synth.json --seed 11 --out " + d + "/data") == 0);
    CHECK(fs::exists(d + "/data/orders.csv"));
    CHECK(fs::exists(d + "/data/audit.json"));
    CHECK(fs::exists(d + "/data/ingest_stats.json"));

    CHECK(run("graph --orders " + d + "/data --out " + d + "/graph.json") == 0);
    CHECK(run("--json graph stats --graph " + d + "/graph.json", d + "/gstats.json") == 0);
    std::string gstats = read_file(d + "/gstats.json");
    CHECK(gstats.find("\"nodes\": 8") != std::string::npos);

    CHECK(run("snapshots --orders " + d + "/data --graph " + d + "/graph.json --out " + d +
              "/bundle.bin") == 0);
    CHECK(run("--json snapshots stats --bundle " + d + "/bundle.bin", d + "/sstats.json") == 0);
    std::string sstats = read_file(d + "/sstats.json");
    CHECK(sstats.find("\"train\"") != std::string::npos);
    CHECK(sstats.find("positive_rate") != std::string::npos);

    for (const char* seed : {"0", "1"})
        CHECK(run("train --bundle " + d + "/bundle.bin --graph " + d + "/graph.json --config " +
                  d + "/config.json --seed " + seed + " --out " + d + "/ckpt_seed" + seed +
                  ".bin --history " + d + "/history_seed" + seed + ".csv") == 0);
    CHECK(fs::exists(d + "/ckpt_seed0.bin"));
    std::string history = read_file(d + "/history_seed0.csv");
    CHECK(history.rfind("epoch,train_loss,val_auc", 0) == 0);

    CHECK(run("--json eval --ckpt " + d + "/ckpt_seed0.bin --bundle " + d +
              "/bundle.bin --graph " + d + "/graph.json --split test", d + "/eval.json") == 0);
    std::string eval_out = read_file(d + "/eval.json");
    CHECK(eval_out.find("f1_macro") != std::string::npos);
    CHECK(eval_out.find("auc_roc") != std::string::npos);

    CHECK(run("report --runs " + d + " --bundle " + d + "/bundle.bin --graph " + d +
              "/graph.json --out " + d + "/report.json") == 0);
    std::string report = read_file(d + "/report.json");
    CHECK(report.find("\"aggregate\"") != std::string::npos);

    CHECK(run("explain --ckpt " + d + "/ckpt_seed0.bin --bundle " + d + "/bundle.bin --graph " +
              d + "/graph.json --format json --out " + d + "/risk.json") == 0);
    CHECK(read_file(d + "/risk.json").find("normalized_risk") != std::string::npos);
    CHECK(run("explain --ckpt " + d + "/ckpt_seed0.bin --bundle " + d + "/bundle.bin --graph " +
              d + "/graph.json --format dot --sender --out " + d + "/risk.dot") == 0);
    CHECK(read_file(d + "/risk.dot").find("digraph risk") != std::string::npos);

    CHECK(run("ablate --variant A3 --bundle " + d + "/bundle.bin --graph " + d +
              "/graph.json --config " + d + "/config.json --out " + d + "/ablate.json") == 0);
    CHECK(read_file(d + "/ablate.json").find("\"variant\": \"A3\"") != std::string::npos);
}

TEST_CASE("exit codes map error classes") {
    std::string d = work_dir();

    CHECK(run("--help") == 0);
    CHECK(run("") == 2);                          // missing subcommand
    CHECK(run("--definitely-not-a-flag synth") == 2);
    CHECK(run("synth --seed 1") == 2);            // missing required --out
    CHECK(run("graph --orders " + d + "/data") == 2);  // missing --out

    // io error: input file does not exist
    CHECK(run("ingest --csv " + d + "/missing.csv --out " + d + "/x") == 6);
    CHECK(run("graph stats --graph " + d + "/missing.json") == 6);

    // data error: malformed input
    write_file(d + "/empty.csv", "foo,bar\n1,2\n");
    CHECK(run("ingest --csv " + d + "/empty.csv --out " + d + "/x") == 3);
    write_file(d + "/bad_bundle.bin", "not a bundle");
    CHECK(run("snapshots stats --bundle " + d + "/bad_bundle.bin") == 3);

    // usage error from semantic validation
    if (fs::exists(d + "/ckpt_seed0.bin"))
        CHECK(run("eval --ckpt " + d + "/ckpt_seed0.bin --bundle " + d + "/bundle.bin --graph " +
                  d + "/graph.json --split bogus") == 2);
    CHECK(run("end-to-end --preset nope") == 2);
    CHECK(run("end-to-end --preset paper") == 2);  // paper preset needs --csv
}

TEST_CASE("end-to-end subcommand reuses its cache across invocations") {
    std::string d = work_dir();
    write_file(d + "/pipe.json", R"({
        "synthetic": {"n_regions":4,"n_days":60,"base_volume":4},
        "synthetic_seed": 11,
        "model": {"d_model":8,"encoder_layers":1,"encoder_heads":2,
                  "gat_layers":1,"gat_heads":2,"head_hidden":8},
        "train": {"epochs":2,"seeds":[0,1]}
    })");
    CHECK(run("--json end-to-end --config " + d + "/pipe.json --out " + d + "/e2e",
              d + "/e2e_first.json") == 0);
    std::string first = read_file(d + "/e2e_first.json");
    CHECK(first.find("\"ingest\"") != std::string::npos);
    CHECK(first.find("\"train\"") != std::string::npos);
    CHECK(fs::exists(d + "/e2e/manifest.json"));

    CHECK(run("--json end-to-end --config " + d + "/pipe.json --out " + d + "/e2e",
              d + "/e2e_second.json") == 0);
    std::string second = read_file(d + "/e2e_second.json");
    CHECK(second.find("\"stages_executed\": []") != std::string::npos);
}
