#include <catch_amalgamated.hpp>

#include "gsdfuse/token_model.hpp"

using namespace gsdfuse;

TEST_CASE("degenerate model emits the same token up to max_len") {
    auto m = TokenModel::degenerate(8, 3);
    auto seq = sample_cover(m, 4, 123u);
    REQUIRE(seq == std::vector<int>{3, 3, 3, 3});
}

TEST_CASE("cover sampling is deterministic in the seed") {
    auto m = TokenModel::random_bigram(32, 9);
    REQUIRE(sample_cover(m, 24, 5u) == sample_cover(m, 24, 5u));
    REQUIRE(sample_cover(m, 24, 5u) != sample_cover(m, 24, 6u));
}

TEST_CASE("uniform first-token frequencies match 1/V") {
    auto m = TokenModel::uniform(4);
    Rng rng(77);
    std::array<int, 4> counts{};
    const int n = 100000;
    for (int i = 0; i < n; ++i) counts[static_cast<std::size_t>(sample_cover(m, 1, rng)[0])]++;
    for (int c : counts) {
        double freq = static_cast<double>(c) / n;
        REQUIRE(freq == Catch::Approx(0.25).margin(0.01));
    }
}

TEST_CASE("random bigram rows are normalized distributions") {
    auto m = TokenModel::random_bigram(64, 42);
    for (int c = kStartContext; c < m.vocab_size(); ++c) {
        auto p = m.conditional(c);
        REQUIRE(p.minCoeff() >= 0.0);
        REQUIRE(p.sum() == Catch::Approx(1.0).margin(1e-9));
    }
    // messages never start with the end token
    REQUIRE(m.conditional(kStartContext)[m.eos_id()] == 0.0);
}

TEST_CASE("end token mass is pinned and lengths stay bounded") {
    auto m = TokenModel::random_bigram(64, 1, 0.3, 0.10);
    Rng rng(3);
    double mean_len = 0.0;
    const int n = 2000;
    for (int i = 0; i < n; ++i) mean_len += static_cast<double>(sample_cover(m, 64, rng).size());
    mean_len /= n;
    REQUIRE(mean_len > 3.0);
    REQUIRE(mean_len < 20.0);
}

TEST_CASE("corpus model backs off to the unigram for unseen contexts") {
    std::vector<std::vector<int>> corpus = {{0, 1, 2}, {0, 1, 2}, {0, 2, 1}};
    auto m = TokenModel::from_corpus(corpus, 4);
    // token 3 never appears as a context; its row must equal the smoothed
    // unigram
    Eigen::VectorXd uni(4);
    // counts: 0 ->3, 1 -> 3, 2 -> 3, 3 -> 0, add-1 unigram over 9+4... counts
    // initialized at one per token: (4,4,4,1)/13
    uni << 4.0 / 13, 4.0 / 13, 4.0 / 13, 1.0 / 13;
    REQUIRE((m.conditional(3) - uni).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("model rejects invalid construction") {
    Eigen::VectorXd start(2);
    start << 0.7, 0.4;  // does not sum to 1
    Eigen::MatrixXd trans = Eigen::MatrixXd::Constant(2, 2, 0.5);
    REQUIRE_THROWS_AS(TokenModel::explicit_model(start, trans), ConfigError);
}

TEST_CASE("bit streams round-trip through strings and pad reads") {
    auto s = BitStream::from_string("0110");
    REQUIRE(s.to_string() == "0110");
    bool padded = false;
    for (int i = 0; i < 4; ++i) s.read_bit(&padded);
    REQUIRE(!padded);
    REQUIRE(s.read_bit(&padded) == 0);
    REQUIRE(padded);
    REQUIRE(s.cursor == 4);  // cursor never passes the end
}
