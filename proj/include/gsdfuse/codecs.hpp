#pragma once

// Generative steganography codecs. Each one hides a bit stream inside a
// token sequence drawn through the conditional model, and can recover the
// consumed prefix from the tokens alone:
//
//   hc_*  : per-step Huffman code over the pool of most probable tokens
//   ac_*  : fixed-precision arithmetic coder run in reverse (the secret
//           bits play the role of the compressed data)
//   adg_* : near-balanced probability grouping; bits select a group, the
//           token is sampled inside it
//
// Shared conventions: position 0 masks the end token (messages are never
// empty); selecting the end token at a later step terminates the message
// and that final step consumes no bits; decode re-derives every step from
// the same model and must see tokens the encoder could have produced.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include "gsdfuse/common.hpp"
#include "gsdfuse/token_model.hpp"

namespace gsdfuse {

struct EncodeResult {
    std::vector<int> tokens;
    std::size_t bits_consumed = 0;
    bool padded = false;     // ran out of stream bits; zeros were substituted
    bool underflow = false;  // arithmetic interval collapsed and was reset
};

namespace detail {

inline int argmax_token(const Eigen::VectorXd& p) {
    int best = 0;
    for (int t = 1; t < p.size(); ++t)
        if (p[t] > p[best]) best = t;
    return best;
}

// Tokens ordered by probability descending, id ascending on ties.
inline std::vector<int> rank_by_probability(const Eigen::VectorXd& p) {
    std::vector<int> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return p[a] > p[b]; });
    return order;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Huffman codec
// ---------------------------------------------------------------------------

struct HuffmanSpec {
    int pool_size = 8;  // 2^k most probable tokens form the candidate pool
};

namespace detail {

struct CanonicalCode {
    std::vector<int> tokens;            // pool members, canonical order
    std::vector<int> lengths;           // code length per member
    std::vector<std::uint64_t> codes;   // code bits per member (MSB-first)

    int find(int token) const {
        for (std::size_t i = 0; i < tokens.size(); ++i)
            if (tokens[i] == token) return static_cast<int>(i);
        return -1;
    }
};

// Huffman code lengths for the pool, then canonical code assignment:
// symbols sorted by (length asc, probability desc, id asc) receive
// consecutive codes, so higher-probability symbols never get longer codes
// and bit 0 always labels the left branch.
inline CanonicalCode build_canonical_code(const Eigen::VectorXd& probs,
                                          const std::vector<int>& pool) {
    const int k = static_cast<int>(pool.size());
    struct HuffNode {
        double weight;
        int left = -1, right = -1;
    };
    std::vector<HuffNode> heap_nodes;
    heap_nodes.reserve(2 * k);
    // (weight, creation index) min-ordering keeps merges deterministic.
    using Entry = std::pair<double, int>;
    auto cmp = [](const Entry& a, const Entry& b) {
        return a.first != b.first ? a.first > b.first : a.second > b.second;
    };
    std::vector<Entry> pq;
    for (int i = 0; i < k; ++i) {
        heap_nodes.push_back({probs[pool[i]], -1, -1});
        pq.push_back({heap_nodes.back().weight, i});
    }
    std::make_heap(pq.begin(), pq.end(), cmp);
    while (pq.size() > 1) {
        std::pop_heap(pq.begin(), pq.end(), cmp);
        Entry a = pq.back();
        pq.pop_back();
        std::pop_heap(pq.begin(), pq.end(), cmp);
        Entry b = pq.back();
        pq.pop_back();
        heap_nodes.push_back({a.first + b.first, a.second, b.second});
        pq.push_back({heap_nodes.back().weight, static_cast<int>(heap_nodes.size()) - 1});
        std::push_heap(pq.begin(), pq.end(), cmp);
    }
    std::vector<int> lengths(k, 0);
    if (k == 1) {
        lengths[0] = 1;
    } else {
        // Depth-first traversal assigns depths to leaves.
        std::vector<std::pair<int, int>> stack{{pq.front().second, 0}};
        while (!stack.empty()) {
            auto [idx, depth] = stack.back();
            stack.pop_back();
            const HuffNode& n = heap_nodes[idx];
            if (n.left < 0) {
                lengths[idx] = depth;
                continue;
            }
            stack.push_back({n.left, depth + 1});
            stack.push_back({n.right, depth + 1});
        }
    }

    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (lengths[a] != lengths[b]) return lengths[a] < lengths[b];
        double pa = probs[pool[a]], pb = probs[pool[b]];
        if (pa != pb) return pa > pb;
        return pool[a] < pool[b];
    });

    CanonicalCode cc;
    cc.tokens.resize(k);
    cc.lengths.resize(k);
    cc.codes.resize(k);
    std::uint64_t code = 0;
    int prev_len = 0;
    for (int i = 0; i < k; ++i) {
        int m = order[i];
        int len = lengths[m];
        if (len > 63) throw ConfigError("huffman code deeper than 63 bits");
        if (i > 0) code = (code + 1) << (len - prev_len);
        cc.tokens[i] = pool[m];
        cc.lengths[i] = len;
        cc.codes[i] = code;
        prev_len = len;
    }
    return cc;
}

// Candidate pool for one step: the pool_size most probable tokens.
inline std::vector<int> huffman_pool(const Eigen::VectorXd& p, int pool_size) {
    if (pool_size < 2 || (pool_size & (pool_size - 1)) != 0)
        throw ConfigError("huffman pool size must be a power of two >= 2");
    int support = 0;
    for (int t = 0; t < p.size(); ++t)
        if (p[t] > 0.0) ++support;
    if (pool_size > support)
        throw ConfigError("huffman pool size exceeds candidate support");
    std::vector<int> ranked = rank_by_probability(p);
    ranked.resize(pool_size);
    return ranked;
}

}  // namespace detail

inline EncodeResult hc_encode(const TokenModel& model, BitStream& bits, const HuffmanSpec& spec,
                              int max_len) {
    if (spec.pool_size > model.vocab_size() - (model.has_eos() ? 1 : 0))
        throw ConfigError("huffman pool size exceeds vocabulary");
    EncodeResult res;
    int context = kStartContext;
    for (int pos = 0; pos < max_len; ++pos) {
        Eigen::VectorXd p = model.step_distribution(context, pos == 0);
        auto pool = detail::huffman_pool(p, spec.pool_size);
        auto code = detail::build_canonical_code(p, pool);
        // Walk the canonical code by reading bits until a codeword matches.
        std::uint64_t acc = 0;
        int len = 0;
        int sym = -1;
        bool step_padded = false;
        std::size_t save_cursor = bits.cursor;
        while (sym < 0) {
            acc = (acc << 1) | static_cast<std::uint64_t>(bits.read_bit(&step_padded));
            ++len;
            for (std::size_t i = 0; i < code.tokens.size(); ++i)
                if (code.lengths[i] == len && code.codes[i] == acc) {
                    sym = static_cast<int>(i);
                    break;
                }
            if (len > 63) throw DecodeError("no huffman codeword matched");
        }
        int tok = code.tokens[sym];
        if (model.has_eos() && tok == model.eos_id()) {
            bits.cursor = save_cursor;  // terminator consumes nothing
            break;
        }
        res.tokens.push_back(tok);
        res.bits_consumed += static_cast<std::size_t>(len);
        res.padded = res.padded || step_padded;
        context = tok;
    }
    return res;
}

inline BitStream hc_decode(const TokenModel& model, const std::vector<int>& tokens,
                           const HuffmanSpec& spec) {
    BitStream out;
    int context = kStartContext;
    for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
        Eigen::VectorXd p = model.step_distribution(context, pos == 0);
        auto pool = detail::huffman_pool(p, spec.pool_size);
        auto code = detail::build_canonical_code(p, pool);
        int sym = code.find(tokens[pos]);
        if (sym < 0)
            throw DecodeError("token " + std::to_string(tokens[pos]) +
                              " outside huffman pool at position " + std::to_string(pos));
        for (int b = code.lengths[sym] - 1; b >= 0; --b)
            out.bits.push_back(static_cast<std::uint8_t>((code.codes[sym] >> b) & 1u));
        context = tokens[pos];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Arithmetic codec
// ---------------------------------------------------------------------------

namespace detail {

// Per-context conditional distributions quantized to integer counts that sum
// to kAcTotal exactly (largest-remainder rounding, ties by token id). Tokens
// outside the support get count zero and can never be selected.
constexpr std::uint32_t kAcTotalBits = 16;
constexpr std::uint32_t kAcTotal = 1u << kAcTotalBits;

class CdfCache {
public:
    explicit CdfCache(const TokenModel& model) : model_(model) {}

    const std::vector<std::uint32_t>& cdf(int context, bool first_position) {
        int key = first_position ? -1 : context;
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        Eigen::VectorXd p = model_.step_distribution(context, first_position);
        return cache_.emplace(key, quantize(p)).first->second;
    }

    static std::vector<std::uint32_t> quantize(const Eigen::VectorXd& p) {
        const int v = static_cast<int>(p.size());
        std::vector<int> support;
        for (int t = 0; t < v; ++t)
            if (p[t] > 0.0) support.push_back(t);
        const int s = static_cast<int>(support.size());
        if (s == 0) throw ConfigError("empty support in arithmetic quantization");
        if (static_cast<std::uint32_t>(s) > kAcTotal)
            throw ConfigError("support too large for arithmetic precision");
        const double scale = static_cast<double>(kAcTotal - s);
        std::vector<std::uint32_t> counts(v, 0);
        std::vector<std::pair<double, int>> rema;  // (-remainder, token)
        std::uint64_t used = 0;
        for (int t : support) {
            double ideal = p[t] * scale;
            auto base = static_cast<std::uint32_t>(ideal);
            counts[t] = base + 1;  // +1 keeps every supported token selectable
            used += counts[t];
            rema.push_back({-(ideal - base), t});
        }
        std::sort(rema.begin(), rema.end());
        std::uint64_t left = kAcTotal - used;
        for (std::uint64_t i = 0; i < left; ++i) counts[rema[i % rema.size()].second]++;
        std::vector<std::uint32_t> cdf(v + 1, 0);
        for (int t = 0; t < v; ++t) cdf[t + 1] = cdf[t] + counts[t];
        return cdf;
    }

private:
    const TokenModel& model_;
    std::map<int, std::vector<std::uint32_t>> cache_;
};

}  // namespace detail

// The secret bits are treated as the compressed data of an arithmetic coder:
// a precision-bit window of the stream selects, step by step, the token
// whose cumulative-probability interval contains it. Bits are consumed one
// per interval renormalization, so the consumed count equals the number of
// stream bits the token choices pin down. ac_decode replays the interval
// arithmetic on the tokens and emits exactly those bits.
//
// precision_bits is the register width; 64 in production. Smaller widths
// exist so the interval-underflow convention (straddling interval narrower
// than one quantization unit: flag, emit most probable token, reset) can be
// exercised, since at 64 bits it is unreachable in practice.
inline EncodeResult ac_encode(const TokenModel& model, BitStream& bits, int max_len,
                              int precision_bits = 64) {
    if (precision_bits < static_cast<int>(detail::kAcTotalBits) + 1 || precision_bits > 64)
        throw ConfigError("arithmetic precision must lie in [17,64]");
    detail::CdfCache cache(model);
    EncodeResult res;
    const std::uint64_t kMax =
        precision_bits == 64 ? ~0ULL : ((1ULL << precision_bits) - 1);
    const int top = precision_bits - 1;
    std::uint64_t low = 0, high = kMax, value = 0;
    std::size_t next_bit = 0;
    auto pull = [&]() -> std::uint64_t {
        if (next_bit < bits.remaining()) return bits.bits[bits.cursor + next_bit++];
        ++next_bit;
        return 0;
    };
    for (int i = 0; i < precision_bits; ++i) value = (value << 1) | pull();

    int context = kStartContext;
    for (int pos = 0; pos < max_len; ++pos) {
        const auto& cdf = cache.cdf(context, pos == 0);
        unsigned __int128 range = static_cast<unsigned __int128>(high - low) + 1;
        if (range < detail::kAcTotal) {
            // Interval too narrow to subdivide: flag, emit the most probable
            // token, restart from the full interval. Decode mirrors this.
            res.underflow = true;
            int tok = detail::argmax_token(model.step_distribution(context, pos == 0));
            low = 0;
            high = kMax;
            if (model.has_eos() && tok == model.eos_id()) break;
            res.tokens.push_back(tok);
            context = tok;
            continue;
        }
        unsigned __int128 scaled =
            ((static_cast<unsigned __int128>(value - low) + 1) * detail::kAcTotal - 1) / range;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), static_cast<std::uint32_t>(scaled));
        int tok = static_cast<int>(it - cdf.begin()) - 1;
        std::uint64_t new_low =
            low + static_cast<std::uint64_t>((range * cdf[tok]) / detail::kAcTotal);
        std::uint64_t new_high =
            low + static_cast<std::uint64_t>((range * cdf[tok + 1]) / detail::kAcTotal - 1);
        if (model.has_eos() && tok == model.eos_id()) break;  // step not committed
        low = new_low;
        high = new_high;
        while ((low >> top) == (high >> top)) {
            low = (low << 1) & kMax;
            high = ((high << 1) | 1) & kMax;
            value = ((value << 1) | pull()) & kMax;
            ++res.bits_consumed;
        }
        res.tokens.push_back(tok);
        context = tok;
    }
    res.padded = res.bits_consumed > bits.remaining();
    bits.cursor += std::min(res.bits_consumed, bits.remaining());
    return res;
}

inline BitStream ac_decode(const TokenModel& model, const std::vector<int>& tokens,
                           int precision_bits = 64) {
    if (precision_bits < static_cast<int>(detail::kAcTotalBits) + 1 || precision_bits > 64)
        throw ConfigError("arithmetic precision must lie in [17,64]");
    detail::CdfCache cache(model);
    BitStream out;
    const std::uint64_t kMax =
        precision_bits == 64 ? ~0ULL : ((1ULL << precision_bits) - 1);
    const int top = precision_bits - 1;
    std::uint64_t low = 0, high = kMax;
    int context = kStartContext;
    for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
        int tok = tokens[pos];
        if (tok < 0 || tok >= model.vocab_size()) throw DecodeError("token id out of range");
        const auto& cdf = cache.cdf(context, pos == 0);
        unsigned __int128 range = static_cast<unsigned __int128>(high - low) + 1;
        if (range < detail::kAcTotal) {
            int expect = detail::argmax_token(model.step_distribution(context, pos == 0));
            if (tok != expect)
                throw DecodeError("token does not match the underflow convention");
            low = 0;
            high = kMax;
            context = tok;
            continue;
        }
        if (cdf[tok + 1] == cdf[tok])
            throw DecodeError("token " + std::to_string(tok) + " has no probability mass");
        std::uint64_t base = low;
        low = base + static_cast<std::uint64_t>((range * cdf[tok]) / detail::kAcTotal);
        high = base + static_cast<std::uint64_t>((range * cdf[tok + 1]) / detail::kAcTotal - 1);
        while ((low >> top) == (high >> top)) {
            out.bits.push_back(static_cast<std::uint8_t>(low >> top));
            low = (low << 1) & kMax;
            high = ((high << 1) | 1) & kMax;
        }
        context = tok;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Adaptive dynamic grouping codec
// ---------------------------------------------------------------------------

namespace detail {

struct AdgPartition {
    int r = 0;                             // bits per step, group count = 2^r
    std::vector<std::vector<int>> groups;  // token ids per group
    std::vector<double> masses;
    std::vector<int> group_of;             // token -> group (or -1)
};

// Group count: 2^r with r = min(floor(log2(candidate count)),
// floor(-log2(p_max))), so groups can all be non-empty and no single token
// outweighs its group's fair share. Tokens go to the currently lightest
// group, heaviest first.
inline AdgPartition adg_partition(const Eigen::VectorXd& p) {
    AdgPartition part;
    std::vector<int> cand;
    double p_max = 0.0;
    for (int t = 0; t < p.size(); ++t)
        if (p[t] > 0.0) {
            cand.push_back(t);
            p_max = std::max(p_max, p[t]);
        }
    if (cand.empty()) throw ConfigError("empty support in grouping");
    int r_count = static_cast<int>(std::floor(std::log2(static_cast<double>(cand.size()))));
    int r_mass = static_cast<int>(std::floor(-std::log2(p_max)));
    part.r = std::max(0, std::min(r_count, r_mass));
    const int g = 1 << part.r;
    part.groups.assign(g, {});
    part.masses.assign(g, 0.0);
    part.group_of.assign(p.size(), -1);
    std::vector<int> order = rank_by_probability(p);
    for (int t : order) {
        if (p[t] <= 0.0) continue;
        int lightest = 0;
        for (int i = 1; i < g; ++i)
            if (part.masses[i] < part.masses[lightest]) lightest = i;
        part.groups[lightest].push_back(t);
        part.masses[lightest] += p[t];
        part.group_of[t] = lightest;
    }
    return part;
}

}  // namespace detail

// Bits pick one of the 2^r near-equal-mass groups (MSB first); the emitted
// token is sampled from the renormalized distribution inside that group, so
// the marginal token distribution stays close to the model's.
inline EncodeResult adg_encode(const TokenModel& model, BitStream& bits, int max_len, Rng& rng) {
    EncodeResult res;
    int context = kStartContext;
    for (int pos = 0; pos < max_len; ++pos) {
        Eigen::VectorXd p = model.step_distribution(context, pos == 0);
        auto part = detail::adg_partition(p);
        int group = 0;
        bool step_padded = false;
        std::size_t save_cursor = bits.cursor;
        for (int b = 0; b < part.r; ++b)
            group = (group << 1) | bits.read_bit(&step_padded);
        const auto& members = part.groups[group];
        // Sample inside the group by ascending token id.
        std::vector<int> ordered = members;
        std::sort(ordered.begin(), ordered.end());
        double mass = part.masses[group];
        double u = uniform01(rng) * mass;
        double acc = 0.0;
        int tok = ordered.back();
        for (int t : ordered) {
            acc += p[t];
            if (u < acc) {
                tok = t;
                break;
            }
        }
        if (model.has_eos() && tok == model.eos_id()) {
            bits.cursor = save_cursor;
            break;
        }
        res.tokens.push_back(tok);
        res.bits_consumed += static_cast<std::size_t>(part.r);
        res.padded = res.padded || step_padded;
        context = tok;
    }
    return res;
}

inline BitStream adg_decode(const TokenModel& model, const std::vector<int>& tokens) {
    BitStream out;
    int context = kStartContext;
    for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
        Eigen::VectorXd p = model.step_distribution(context, pos == 0);
        auto part = detail::adg_partition(p);
        int tok = tokens[pos];
        if (tok < 0 || tok >= model.vocab_size() || part.group_of[tok] < 0)
            throw DecodeError("token " + std::to_string(tok) +
                              " outside grouping support at position " + std::to_string(pos));
        int group = part.group_of[tok];
        for (int b = part.r - 1; b >= 0; --b)
            out.bits.push_back(static_cast<std::uint8_t>((group >> b) & 1u));
        context = tok;
    }
    return out;
}

}  // namespace gsdfuse
