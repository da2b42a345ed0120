#pragma once

// Synthetic cover/stego dialogue forests. Trees grow by a geometric
// branching process, every node starts as a model-sampled cover message,
// and a chosen fraction of the leaves (the only nodes that could still be
// swapped without anyone having replied) are re-generated through a codec
// carrying fresh random bits.

#include <cstdint>
#include <string>
#include <vector>

#include "gsdfuse/codecs.hpp"
#include "gsdfuse/common.hpp"
#include "gsdfuse/forest.hpp"
#include "gsdfuse/token_model.hpp"

namespace gsdfuse {

enum class Codec { hc, ac, adg };

inline Codec parse_codec(const std::string& s) {
    if (s == "hc") return Codec::hc;
    if (s == "ac") return Codec::ac;
    if (s == "adg") return Codec::adg;
    throw ConfigError("unknown codec: " + s);
}

inline const char* codec_name(Codec c) {
    switch (c) {
        case Codec::hc: return "hc";
        case Codec::ac: return "ac";
        case Codec::adg: return "adg";
    }
    return "?";
}

struct SandboxSpec {
    Codec codec = Codec::hc;
    int hc_tree_size = 8;   // HC candidate pool, a power of two
    double srs = 0.1;       // fraction of eligible leaves replaced by stego
    int n_trees = 100;
    int mean_tree_size = 8;
    int max_len = 32;
    std::uint64_t seed = 42;

    void validate() const {
        if (srs < 0.0 || srs > 1.0) throw ConfigError("srs must lie in [0,1]");
        if (hc_tree_size < 2 || (hc_tree_size & (hc_tree_size - 1)) != 0)
            throw ConfigError("hc_tree_size must be a power of two >= 2");
        if (n_trees < 1) throw ConfigError("n_trees must be >= 1");
        if (mean_tree_size < 1) throw ConfigError("mean_tree_size must be >= 1");
        if (max_len < 1) throw ConfigError("max_len must be >= 1");
    }
};

namespace detail {

// Geometric child counts with mean m give subcritical branching whose
// expected total size is 1/(1-m); m is solved from the requested mean size.
// A hard cap bounds the tail.
inline std::vector<int> grow_tree_parents(int mean_size, Rng& rng) {
    const double m = 1.0 - 1.0 / static_cast<double>(mean_size);
    const int cap = std::max(2, 16 * mean_size);
    std::vector<int> parent{-1};
    if (m <= 0.0) return parent;
    const double q = m / (1.0 + m);
    const double logq = std::log(q);
    for (std::size_t i = 0; i < parent.size() && static_cast<int>(parent.size()) < cap; ++i) {
        double u = uniform01(rng);
        if (u <= 0.0) u = 0x1.0p-53;
        int children = static_cast<int>(std::floor(std::log(u) / logq));
        for (int c = 0; c < children && static_cast<int>(parent.size()) < cap; ++c)
            parent.push_back(static_cast<int>(i));
    }
    return parent;
}

}  // namespace detail

inline EncodeResult run_codec(Codec codec, const TokenModel& model, BitStream& bits, int max_len,
                              int hc_pool, Rng& rng) {
    switch (codec) {
        case Codec::hc: return hc_encode(model, bits, HuffmanSpec{hc_pool}, max_len);
        case Codec::ac: return ac_encode(model, bits, max_len);
        case Codec::adg: return adg_encode(model, bits, max_len, rng);
    }
    throw ConfigError("unknown codec");
}

inline DialogueForest synthesize_sandbox(const SandboxSpec& spec, const TokenModel& model) {
    spec.validate();
    DialogueForest forest;
    forest.vocab_size = model.vocab_size();

    std::int64_t next_id = 0;
    for (int t = 0; t < spec.n_trees; ++t) {
        // Per-tree generator stream (seed xor tree id) keeps trees
        // independent of generation order.
        Rng tree_rng(derive_seed(spec.seed ^ static_cast<std::uint64_t>(t), 0x54524545ULL));
        auto parents = detail::grow_tree_parents(spec.mean_tree_size, tree_rng);
        std::int64_t base = next_id;
        for (std::size_t i = 0; i < parents.size(); ++i) {
            MessageNode n;
            n.node_id = next_id++;
            n.tree_id = t;
            if (parents[i] >= 0) n.parent_id = base + parents[i];
            n.token_ids = sample_cover(model, spec.max_len, tree_rng);
            n.label = 0;
            forest.nodes.push_back(std::move(n));
        }
    }

    // Eligible for substitution: leaves only (no one has replied to them).
    std::vector<char> has_child(forest.nodes.size(), 0);
    std::unordered_map<std::int64_t, std::size_t> idx;
    for (std::size_t i = 0; i < forest.nodes.size(); ++i) idx[forest.nodes[i].node_id] = i;
    for (const auto& n : forest.nodes)
        if (n.parent_id) has_child[idx[*n.parent_id]] = 1;
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < forest.nodes.size(); ++i)
        if (!has_child[i]) eligible.push_back(i);
    if (eligible.empty()) throw SynthesisError("no eligible leaf nodes to substitute");

    auto n_stego = static_cast<std::size_t>(
        std::llround(spec.srs * static_cast<double>(eligible.size())));
    Rng pick_rng(derive_seed(spec.seed, 0x535253ULL));  // "SRS"
    for (std::size_t i = 0; i + 1 < eligible.size() && i < n_stego; ++i) {
        std::size_t j = i + static_cast<std::size_t>(uniform_below(pick_rng, eligible.size() - i));
        std::swap(eligible[i], eligible[j]);
    }
    std::vector<std::size_t> chosen(eligible.begin(),
                                    eligible.begin() + static_cast<std::ptrdiff_t>(n_stego));
    std::sort(chosen.begin(), chosen.end());

    std::size_t total_bits = 0, total_tokens = 0;
    for (std::size_t i : chosen) {
        MessageNode& node = forest.nodes[i];
        Rng bits_rng(derive_seed(spec.seed ^ static_cast<std::uint64_t>(node.node_id),
                                 0x42495453ULL));  // "BITS"
        BitStream bits = BitStream::random(static_cast<std::size_t>(spec.max_len) * 32 + 64,
                                           bits_rng);
        Rng samp_rng(derive_seed(spec.seed ^ static_cast<std::uint64_t>(node.node_id),
                                 0x41444753ULL));
        EncodeResult enc = run_codec(spec.codec, model, bits, spec.max_len, spec.hc_tree_size,
                                     samp_rng);
        node.token_ids = enc.tokens;
        node.label = 1;
        total_bits += enc.bits_consumed;
        total_tokens += enc.tokens.size();
    }

    ForestMeta meta;
    meta.codec = codec_name(spec.codec);
    meta.srs = spec.srs;
    meta.bpw_realized =
        total_tokens > 0 ? static_cast<double>(total_bits) / static_cast<double>(total_tokens)
                         : 0.0;
    meta.seed = spec.seed;
    meta.vocab_size = model.vocab_size();
    forest.meta = meta;
    forest.finalize();
    return forest;
}

// Empirical security diagnostic: average KL divergence (nats) between the
// add-1 smoothed next-token distributions of the two corpora, taken over
// every context (sequence start or previous token) observed in either one.
// Zero means the stego text is statistically indistinguishable at this
// order; larger values mean a detectable footprint.
inline double kl_diagnostic(const std::vector<std::vector<int>>& cover_corpus,
                            const std::vector<std::vector<int>>& stego_corpus,
                            const TokenModel& model) {
    if (cover_corpus.empty() || stego_corpus.empty())
        throw ConfigError("kl_diagnostic needs non-empty corpora");
    const int v = model.vocab_size();
    const int n_ctx = v + 1;  // context v == sequence start
    Eigen::MatrixXd cover_counts = Eigen::MatrixXd::Zero(n_ctx, v);
    Eigen::MatrixXd stego_counts = Eigen::MatrixXd::Zero(n_ctx, v);
    auto tally = [&](const std::vector<std::vector<int>>& corpus, Eigen::MatrixXd& counts) {
        for (const auto& seq : corpus) {
            int ctx = v;
            for (int tok : seq) {
                if (tok < 0 || tok >= v) throw ConfigError("token out of range in corpus");
                counts(ctx, tok) += 1.0;
                ctx = tok;
            }
        }
    };
    tally(cover_corpus, cover_counts);
    tally(stego_corpus, stego_counts);

    double total = 0.0;
    int observed = 0;
    for (int c = 0; c < n_ctx; ++c) {
        double nc = cover_counts.row(c).sum();
        double ns = stego_counts.row(c).sum();
        if (nc == 0.0 && ns == 0.0) continue;
        ++observed;
        double kl = 0.0;
        for (int t = 0; t < v; ++t) {
            double pc = (cover_counts(c, t) + 1.0) / (nc + v);
            double ps = (stego_counts(c, t) + 1.0) / (ns + v);
            kl += pc * std::log(pc / ps);
        }
        total += kl;
    }
    return observed > 0 ? total / observed : 0.0;
}

}  // namespace gsdfuse
