#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "gsdfuse/report.hpp"

using namespace gsdfuse;

namespace {

RunReport sample_report(double f1a, double f1b, const std::string& codec = "hc",
                        double srs = 0.1, int vocab = 64) {
    RunReport r;
    r.meta.codec = codec;
    r.meta.srs = srs;
    r.meta.bpw_realized = 3.0;
    r.meta.seed = 1;
    r.meta.vocab_size = vocab;
    r.fingerprint = fnv1a64(codec + std::to_string(srs));
    SeedResult a, b;
    a.seed = 42;
    a.test_f1 = f1a;
    b.seed = 43;
    b.test_f1 = f1b;
    r.seeds = {a, b};
    return r;
}

}  // namespace

TEST_CASE("single-seed cell formats to two decimals in percent") {
    RunReport r = sample_report(2.0 / 3.0, 0.0);
    r.seeds.resize(1);
    auto table = emit_table({r});
    REQUIRE(table.csv.find("66.67") != std::string::npos);
}

TEST_CASE("mean and population spread of two seeds") {
    RunReport r = sample_report(0.60, 0.70);
    REQUIRE(r.mean_f1() == Catch::Approx(0.65).margin(1e-15));
    REQUIRE(r.std_f1() == Catch::Approx(0.05).margin(1e-12));
    auto table = emit_table({r});
    REQUIRE(table.csv.find("65.00") != std::string::npos);
    REQUIRE(table.csv.find("5.00") != std::string::npos);
}

TEST_CASE("an empty report list is a usage error") {
    REQUIRE_THROWS_AS(emit_table({}), ConfigError);
}

TEST_CASE("rows come out ordered by codec then srs") {
    auto t = emit_table({sample_report(0.5, 0.5, "hc", 0.3), sample_report(0.4, 0.4, "ac", 0.5),
                         sample_report(0.6, 0.6, "hc", 0.1), sample_report(0.3, 0.3, "ac", 0.1)});
    auto pos = [&](const std::string& needle) { return t.csv.find(needle); };
    REQUIRE(pos("ac,0.1") < pos("ac,0.5"));
    REQUIRE(pos("ac,0.5") < pos("hc,0.1"));
    REQUIRE(pos("hc,0.1") < pos("hc,0.3"));
}

TEST_CASE("mixed vocabularies refuse to merge") {
    REQUIRE_THROWS_AS(emit_table({sample_report(0.5, 0.5, "hc", 0.1, 64),
                                  sample_report(0.5, 0.5, "hc", 0.3, 128)}),
                      ConfigError);
}

TEST_CASE("report json round-trips") {
    RunReport r = sample_report(0.61, 0.71);
    r.use_gin = false;
    auto path = (std::filesystem::temp_directory_path() / "rep.json").string();
    write_report(path, r);
    RunReport back = read_report(path);
    REQUIRE(back.ablation() == "no_gin");
    REQUIRE(back.mean_f1() == Catch::Approx(r.mean_f1()).margin(1e-12));
    REQUIRE(back.fingerprint == r.fingerprint);
    REQUIRE(back.seeds.size() == 2);
}

TEST_CASE("results csv appends and flags duplicate fingerprints") {
    auto dir = std::filesystem::temp_directory_path() / "results_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    auto path = (dir / "results.csv").string();
    RunReport r = sample_report(0.5, 0.6);
    append_results_csv(path, r);
    append_results_csv(path, r);  // identical rerun
    RunReport other = sample_report(0.5, 0.6);
    other.use_gau = false;  // same dataset, different ablation: not a duplicate
    append_results_csv(path, other);

    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    REQUIRE(line == std::string(kResultsHeader));
    std::vector<std::string> rows;
    while (std::getline(in, line)) rows.push_back(line);
    REQUIRE(rows.size() == 3);
    REQUIRE(rows[0].find(",no") != std::string::npos);
    REQUIRE(rows[1].find(",yes") != std::string::npos);
    REQUIRE(rows[2].find(",no") != std::string::npos);
}
