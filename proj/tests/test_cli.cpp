// Drives the installed command line binary as a subprocess: flag parsing,
// exit codes, and the on-disk artifacts each subcommand promises.

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "gsdfuse/forest.hpp"
#include "gsdfuse/report.hpp"

using namespace gsdfuse;

namespace {

const std::string kCli = GSDFUSE_CLI_PATH;

int run(const std::string& args) {
    int rc = std::system((kCli + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(rc);
}

std::filesystem::path work_dir() {
    auto dir = std::filesystem::temp_directory_path() / "gsdfuse_cli_test";
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("usage problems exit with code 1") {
    REQUIRE(run("") == 1);
    REQUIRE(run("synth --codec nonsense") == 1);
    REQUIRE(run("train --config /nonexistent.json") == 1);
}

TEST_CASE("synth emits a loadable forest with sidecar metadata") {
    auto dir = work_dir();
    auto data = (dir / "cli_data.jsonl").string();
    REQUIRE(run("synth --out " + data +
                " --codec adg --srs 0.2 --trees 40 --vocab 32 --seed 9") == 0);
    DialogueForest f = load_forest(data);
    REQUIRE(f.num_nodes() > 40);
    REQUIRE(f.meta.has_value());
    REQUIRE(f.meta->codec == "adg");
    REQUIRE(f.meta->srs == 0.2);
    int stego = 0;
    for (const auto& n : f.nodes) stego += n.label;
    REQUIRE(stego > 0);
}

TEST_CASE("train, eval, and report work end to end") {
    auto dir = work_dir();
    auto cfg_path = (dir / "cfg.json").string();
    {
        std::ofstream cfg(cfg_path);
        cfg << R"({
  "data": {"codec": "hc", "hc_pool": 4, "srs": 0.3, "trees": 60, "vocab_size": 32,
           "mean_tree_size": 4, "lm_seed": 3, "synth_seed": 5},
  "model": {"embed_dim": 6, "channels": 6, "kernels": [2,3], "gnn_dim": 8, "gnn_heads": 2,
            "gin_dim": 8, "fuse_dim": 8},
  "sampler": {"roots_per_sample": 50, "node_budget": 100, "sample_coverage": 5},
  "train": {"max_epochs": 4, "patience": 3, "n_runs": 1, "seed": 2}
})";
    }
    auto out = (dir / "run_out").string();
    std::filesystem::remove_all(out);
    REQUIRE(run("train --config " + cfg_path + " --out " + out) == 0);
    REQUIRE(std::filesystem::exists(out + "/data.jsonl"));
    REQUIRE(std::filesystem::exists(out + "/results.csv"));
    REQUIRE(std::filesystem::exists(out + "/seed2_all.ckpt"));
    REQUIRE(std::filesystem::exists(out + "/seed2_all_runlog.csv"));

    // report JSON carries exactly n_runs seed entries
    bool found_report = false;
    for (const auto& e : std::filesystem::directory_iterator(out))
        if (e.path().filename().string().rfind("report_", 0) == 0) {
            RunReport r = read_report(e.path().string());
            REQUIRE(r.seeds.size() == 1);
            REQUIRE(!r.failed);
            found_report = true;
        }
    REQUIRE(found_report);

    REQUIRE(run("eval --config " + cfg_path + " --checkpoint " + out + "/seed2_all.ckpt" +
                " --data " + out + "/data.jsonl --split test") == 0);
    // a mismatched config must refuse with exit code 1
    auto cfg2_path = (dir / "cfg2.json").string();
    {
        std::ifstream in(cfg_path);
        std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        std::ofstream c2(cfg2_path);
        c2 << text.replace(text.find("\"lm_seed\": 3"), 12, "\"lm_seed\": 4");
    }
    REQUIRE(run("eval --config " + cfg2_path + " --checkpoint " + out + "/seed2_all.ckpt" +
                " --data " + out + "/data.jsonl --split test") == 1);

    REQUIRE(run("report --out " + out) == 0);
    REQUIRE(std::filesystem::exists(out + "/table.csv"));
    REQUIRE(std::filesystem::exists(out + "/table.txt"));

    // an ablated rerun on the same dataset shares the dataset fingerprint
    REQUIRE(run("train --config " + cfg_path + " --out " + out + " --no-gin") == 0);
    std::ifstream res(out + "/results.csv");
    std::string header, row1, row2;
    std::getline(res, header);
    std::getline(res, row1);
    std::getline(res, row2);
    REQUIRE(row1.substr(0, row1.find(',')) == row2.substr(0, row2.find(',')));
    REQUIRE(row2.find("no_gin") != std::string::npos);
}
