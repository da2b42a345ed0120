#include <catch_amalgamated.hpp>

#include <unordered_set>

#include "gsdfuse/sandbox.hpp"

using namespace gsdfuse;

namespace {

std::unordered_set<std::int64_t> parents_of(const DialogueForest& f) {
    std::unordered_set<std::int64_t> ps;
    for (const auto& n : f.nodes)
        if (n.parent_id) ps.insert(*n.parent_id);
    return ps;
}

}  // namespace

TEST_CASE("srs zero leaves every node a cover") {
    SandboxSpec spec;
    spec.codec = Codec::hc;
    spec.srs = 0.0;
    spec.n_trees = 20;
    spec.seed = 3;
    auto m = TokenModel::random_bigram(32, 3);
    auto f = synthesize_sandbox(spec, m);
    for (const auto& n : f.nodes) REQUIRE(n.label == 0);
    REQUIRE(f.meta->bpw_realized == 0.0);
}

TEST_CASE("half of ten single-node trees become stego") {
    SandboxSpec spec;
    spec.codec = Codec::hc;
    spec.hc_tree_size = 4;
    spec.srs = 0.5;
    spec.n_trees = 10;
    spec.mean_tree_size = 1;  // every tree is a lone eligible leaf
    spec.seed = 11;
    auto m = TokenModel::random_bigram(32, 4);
    auto f = synthesize_sandbox(spec, m);
    int stego = 0;
    for (const auto& n : f.nodes) stego += n.label;
    REQUIRE(f.num_nodes() == 10);
    REQUIRE(stego == 5);
}

TEST_CASE("stego nodes are always leaves and their count follows srs") {
    SandboxSpec spec;
    spec.codec = Codec::adg;
    spec.srs = 0.3;
    spec.n_trees = 60;
    spec.seed = 5;
    auto m = TokenModel::random_bigram(64, 5);
    auto f = synthesize_sandbox(spec, m);
    auto ps = parents_of(f);
    std::int64_t eligible = 0, stego = 0;
    for (const auto& n : f.nodes) {
        bool leaf = ps.count(n.node_id) == 0;
        eligible += leaf;
        stego += n.label;
        if (n.label == 1) REQUIRE(leaf);
    }
    REQUIRE(stego == std::llround(0.3 * static_cast<double>(eligible)));
    REQUIRE(static_cast<int>(f.adjacency.size()) == f.num_nodes() - f.num_trees());
}

TEST_CASE("synthesis is deterministic in the seed") {
    SandboxSpec spec;
    spec.codec = Codec::ac;
    spec.srs = 0.2;
    spec.n_trees = 15;
    spec.seed = 21;
    auto m = TokenModel::random_bigram(32, 9);
    auto a = synthesize_sandbox(spec, m);
    auto b = synthesize_sandbox(spec, m);
    REQUIRE(a.num_nodes() == b.num_nodes());
    for (int i = 0; i < a.num_nodes(); ++i) {
        REQUIRE(a.nodes[i].token_ids == b.nodes[i].token_ids);
        REQUIRE(a.nodes[i].label == b.nodes[i].label);
    }
    REQUIRE(a.meta->bpw_realized == b.meta->bpw_realized);
}

TEST_CASE("uniform huffman pools give integer bits per word") {
    auto m = TokenModel::uniform(16);
    for (int k = 1; k <= 3; ++k) {
        SandboxSpec spec;
        spec.codec = Codec::hc;
        spec.hc_tree_size = 1 << k;
        spec.srs = 0.5;
        spec.n_trees = 12;
        spec.seed = 100 + static_cast<std::uint64_t>(k);
        auto f = synthesize_sandbox(spec, m);
        REQUIRE(f.meta->bpw_realized == static_cast<double>(k));
    }
}

TEST_CASE("identical corpora have zero divergence") {
    auto m = TokenModel::uniform(4);
    std::vector<std::vector<int>> corpus = {{0, 1, 2, 3}, {1, 1}, {2}};
    REQUIRE(kl_diagnostic(corpus, corpus, m) == 0.0);
}

TEST_CASE("disjoint one-token corpora match the smoothed closed form") {
    auto m = TokenModel::uniform(2);
    std::vector<std::vector<int>> cover(1000, std::vector<int>{0});
    std::vector<std::vector<int>> stego(1000, std::vector<int>{1});
    double kl = kl_diagnostic(cover, stego, m);
    double expected = 1000.0 / 1002.0 * std::log(1001.0);
    REQUIRE(kl == Catch::Approx(expected).margin(1e-12));
    REQUIRE(kl == Catch::Approx(6.909).margin(0.05));
}

TEST_CASE("grouped stego stays closer to cover than a truncating pool") {
    auto m = TokenModel::random_bigram(64, 7);
    Rng cover_rng(1), bit_rng(2), adg_rng(3);
    std::vector<std::vector<int>> cover, adg, hc;
    auto total_tokens = [](const std::vector<std::vector<int>>& c) {
        std::size_t n = 0;
        for (const auto& s : c) n += s.size();
        return n;
    };
    while (total_tokens(cover) < 10000) cover.push_back(sample_cover(m, 32, cover_rng));
    while (total_tokens(adg) < 10000) {
        auto bits = BitStream::random(1024, bit_rng);
        adg.push_back(adg_encode(m, bits, 32, adg_rng).tokens);
    }
    while (total_tokens(hc) < 10000) {
        auto bits = BitStream::random(1024, bit_rng);
        hc.push_back(hc_encode(m, bits, HuffmanSpec{32}, 32).tokens);
    }
    double kl_adg = kl_diagnostic(cover, adg, m);
    double kl_hc = kl_diagnostic(cover, hc, m);
    REQUIRE(kl_adg < kl_hc);
}

TEST_CASE("synthesizer validates its spec") {
    SandboxSpec spec;
    spec.srs = 1.5;
    auto m = TokenModel::uniform(8);
    REQUIRE_THROWS_AS(synthesize_sandbox(spec, m), ConfigError);
    spec.srs = 0.5;
    spec.hc_tree_size = 6;
    REQUIRE_THROWS_AS(synthesize_sandbox(spec, m), ConfigError);
}
