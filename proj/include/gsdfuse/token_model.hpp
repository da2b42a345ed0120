#pragma once

// Toy conditional language model: an order-2 (bigram) table over a small
// vocabulary. It drives cover sampling and every steganographic codec.
// Contexts are (previous token) for positions >= 1 and a start distribution
// at position 0; unseen contexts in corpus-trained models fall back to the
// add-1 unigram row, so every reachable context has a distribution.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gsdfuse/common.hpp"

namespace gsdfuse {

constexpr int kStartContext = -1;

struct BitStream {
    std::vector<std::uint8_t> bits;
    std::size_t cursor = 0;

    BitStream() = default;
    explicit BitStream(std::vector<std::uint8_t> b) : bits(std::move(b)) {}

    static BitStream random(std::size_t n, Rng& rng) {
        BitStream s;
        s.bits.resize(n);
        for (std::size_t i = 0; i < n; ++i) s.bits[i] = static_cast<std::uint8_t>(rng() & 1u);
        return s;
    }

    static BitStream from_string(const std::string& str) {
        BitStream s;
        s.bits.reserve(str.size());
        for (char c : str) {
            if (c != '0' && c != '1') throw ConfigError("bit string must be 0/1");
            s.bits.push_back(static_cast<std::uint8_t>(c - '0'));
        }
        return s;
    }

    std::string to_string() const {
        std::string out;
        out.reserve(bits.size());
        for (auto b : bits) out.push_back(static_cast<char>('0' + b));
        return out;
    }

    std::size_t size() const { return bits.size(); }
    std::size_t remaining() const { return bits.size() - cursor; }
    bool exhausted() const { return cursor >= bits.size(); }

    // Reads one bit; past the end reads 0 and reports exhaustion via the
    // flag. The cursor never moves past the stream length.
    int read_bit(bool* padded = nullptr) {
        if (cursor < bits.size()) return bits[cursor++];
        if (padded) *padded = true;
        return 0;
    }

    // Peek without consuming; offset is relative to the cursor.
    int peek_bit(std::size_t offset) const {
        std::size_t i = cursor + offset;
        return i < bits.size() ? bits[i] : 0;
    }

    std::vector<std::uint8_t> prefix(std::size_t n) const {
        std::vector<std::uint8_t> out(n, 0);
        for (std::size_t i = 0; i < n && i < bits.size(); ++i) out[i] = bits[i];
        return out;
    }
};

class TokenModel {
public:
    TokenModel() = default;

    int vocab_size() const { return vocab_size_; }
    int order() const { return 2; }
    int eos_id() const { return eos_id_; }
    bool has_eos() const { return eos_id_ >= 0; }

    // Uniform over all V tokens, no end token; sequences run to max_len.
    static TokenModel uniform(int vocab_size) {
        TokenModel m;
        m.init(vocab_size, -1);
        m.start_.setConstant(1.0 / vocab_size);
        m.trans_.setConstant(1.0 / vocab_size);
        return m;
    }

    // All mass on one token, regardless of context.
    static TokenModel degenerate(int vocab_size, int token) {
        TokenModel m;
        m.init(vocab_size, -1);
        m.start_[token] = 1.0;
        m.trans_.col(token).setOnes();
        return m;
    }

    // Explicit start distribution and transition rows (row = previous token).
    static TokenModel explicit_model(const Eigen::VectorXd& start, const Eigen::MatrixXd& trans,
                                     int eos_id = -1) {
        if (trans.rows() != start.size() || trans.cols() != start.size())
            throw ConfigError("transition matrix shape mismatch");
        TokenModel m;
        m.init(static_cast<int>(start.size()), eos_id);
        m.start_ = start;
        m.trans_ = trans;
        m.validate();
        return m;
    }

    // Seeded Dirichlet-like rows: skewed per-context distributions with the
    // end token's mass pinned at eos_prob so message lengths stay realistic.
    static TokenModel random_bigram(int vocab_size, std::uint64_t seed, double alpha = 0.3,
                                    double eos_prob = 0.08, int eos_id = 0) {
        if (vocab_size < 3) throw ConfigError("random_bigram needs vocab_size >= 3");
        if (eos_id < 0 || eos_id >= vocab_size) throw ConfigError("eos_id out of range");
        if (eos_prob < 0.0 || eos_prob >= 1.0) throw ConfigError("eos_prob must be in [0,1)");
        TokenModel m;
        m.init(vocab_size, eos_id);
        Rng rng(derive_seed(seed, 0x4c4dULL));  // "LM"
        auto fill_row = [&]() {
            Eigen::VectorXd row(vocab_size);
            double sum = 0.0;
            for (int t = 0; t < vocab_size; ++t) {
                // Gamma(alpha) via Marsaglia-Tsang on alpha+1, then the
                // standard boost; normalized draws are Dirichlet(alpha).
                double d = alpha + 1.0 - 1.0 / 3.0;
                double c = 1.0 / std::sqrt(9.0 * d);
                double g;
                for (;;) {
                    double x = normal01(rng);
                    double v = 1.0 + c * x;
                    if (v <= 0.0) continue;
                    v = v * v * v;
                    double u = uniform01(rng);
                    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
                        g = d * v;
                        break;
                    }
                }
                g *= std::pow(uniform01(rng) + 1e-300, 1.0 / alpha);
                row[t] = g + 1e-12;
                sum += row[t];
            }
            row /= sum;
            // Pin the end token's share and renormalize the rest.
            double rest = 1.0 - row[eos_id];
            row[eos_id] = eos_prob;
            for (int t = 0; t < vocab_size; ++t)
                if (t != eos_id) row[t] *= (1.0 - eos_prob) / rest;
            return row;
        };
        m.start_ = fill_row();
        m.start_[eos_id] = 0.0;  // a message cannot end before it begins
        m.start_ /= m.start_.sum();
        for (int p = 0; p < vocab_size; ++p) m.trans_.row(p) = fill_row().transpose();
        m.validate();
        return m;
    }

    // Add-1 smoothed counts from a token corpus; unseen contexts use the
    // smoothed unigram row.
    static TokenModel from_corpus(const std::vector<std::vector<int>>& sequences, int vocab_size,
                                  int eos_id = -1) {
        TokenModel m;
        m.init(vocab_size, eos_id);
        Eigen::VectorXd start_counts = Eigen::VectorXd::Ones(vocab_size);
        Eigen::VectorXd uni_counts = Eigen::VectorXd::Ones(vocab_size);
        Eigen::MatrixXd bi_counts = Eigen::MatrixXd::Zero(vocab_size, vocab_size);
        std::vector<bool> seen(vocab_size, false);
        for (const auto& seq : sequences) {
            for (std::size_t i = 0; i < seq.size(); ++i) {
                int t = seq[i];
                if (t < 0 || t >= vocab_size) throw ConfigError("corpus token out of range");
                uni_counts[t] += 1.0;
                if (i == 0)
                    start_counts[t] += 1.0;
                else {
                    bi_counts(seq[i - 1], t) += 1.0;
                    seen[seq[i - 1]] = true;
                }
            }
        }
        m.start_ = start_counts / start_counts.sum();
        Eigen::VectorXd unigram = uni_counts / uni_counts.sum();
        for (int p = 0; p < vocab_size; ++p) {
            if (!seen[p]) {
                m.trans_.row(p) = unigram.transpose();
            } else {
                Eigen::VectorXd row = bi_counts.row(p).transpose() + Eigen::VectorXd::Ones(vocab_size);
                m.trans_.row(p) = (row / row.sum()).transpose();
            }
        }
        m.validate();
        return m;
    }

    // Raw conditional distribution for a context (kStartContext or previous
    // token id).
    Eigen::VectorXd conditional(int context) const {
        if (context == kStartContext) return start_;
        if (context < 0 || context >= vocab_size_) throw ConfigError("context out of range");
        return trans_.row(context).transpose();
    }

    // Distribution the generators actually draw from: at the first position
    // the end token is masked out and the row renormalized, so no message is
    // empty.
    Eigen::VectorXd step_distribution(int context, bool first_position) const {
        Eigen::VectorXd p = conditional(context);
        if (first_position && has_eos() && p[eos_id_] > 0.0) {
            p[eos_id_] = 0.0;
            double s = p.sum();
            if (s <= 0.0) throw ConfigError("degenerate distribution after end-token mask");
            p /= s;
        }
        return p;
    }

    void validate() const {
        for (int c = kStartContext; c < vocab_size_; ++c) {
            Eigen::VectorXd p = conditional(c);
            if (p.minCoeff() < 0.0) throw ConfigError("negative probability in token model");
            if (std::abs(p.sum() - 1.0) > 1e-9)
                throw ConfigError("token model row does not sum to 1");
        }
    }

private:
    void init(int vocab_size, int eos_id) {
        if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
        vocab_size_ = vocab_size;
        eos_id_ = eos_id;
        start_ = Eigen::VectorXd::Zero(vocab_size);
        trans_ = Eigen::MatrixXd::Zero(vocab_size, vocab_size);
    }

    int vocab_size_ = 0;
    int eos_id_ = -1;
    Eigen::VectorXd start_;
    Eigen::MatrixXd trans_;  // row = previous token
};

// Draws one cover message: inverse-CDF sampling of the model conditionals,
// stopping at the end token (excluded from the output) or max_len.
inline std::vector<int> sample_cover(const TokenModel& model, int max_len, Rng& rng) {
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
    std::vector<int> out;
    int context = kStartContext;
    for (int pos = 0; pos < max_len; ++pos) {
        Eigen::VectorXd p = model.step_distribution(context, pos == 0);
        double u = uniform01(rng);
        double acc = 0.0;
        int tok = model.vocab_size() - 1;
        for (int t = 0; t < model.vocab_size(); ++t) {
            acc += p[t];
            if (u < acc) {
                tok = t;
                break;
            }
        }
        if (model.has_eos() && tok == model.eos_id()) break;
        out.push_back(tok);
        context = tok;
    }
    return out;
}

inline std::vector<int> sample_cover(const TokenModel& model, int max_len, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x434f56ULL));  // "COV"
    return sample_cover(model, max_len, rng);
}

}  // namespace gsdfuse
