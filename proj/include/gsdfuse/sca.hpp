#pragma once

// Sentence encoder: embedding lookup followed by parallel 1-D convolutions
// (kernel widths 3/4/5 by default), ReLU, and max-over-time pooling. The
// pooled channels concatenate into one fixed-width semantic vector per
// message. Windows never cover padding; sequences shorter than a kernel get
// a single zero-padded window.

#include <vector>

#include <Eigen/Dense>

#include "gsdfuse/common.hpp"
#include "gsdfuse/nn_core.hpp"

namespace gsdfuse {

struct SentenceEncoderConfig {
    int vocab_size = 0;
    int embed_dim = 32;
    int channels = 128;
    std::vector<int> kernels = {3, 4, 5};
    int max_len = 32;

    int out_dim() const { return channels * static_cast<int>(kernels.size()); }
};

class SentenceEncoder {
public:
    explicit SentenceEncoder(const SentenceEncoderConfig& cfg)
        : cfg_(cfg),
          // one extra row is reserved for the pad id (= vocab_size); pooled
          // windows never read it, it only keeps lookups total
          embedding_("embedding", cfg.vocab_size + 1, cfg.embed_dim) {
        for (int k : cfg_.kernels) {
            conv_w_.emplace_back("sca.conv" + std::to_string(k) + ".w",
                                 static_cast<Eigen::Index>(k) * cfg_.embed_dim, cfg_.channels);
            conv_b_.emplace_back("sca.conv" + std::to_string(k) + ".b", cfg_.channels, 1);
        }
    }

    void init(std::uint64_t seed) {
        embedding_.init_normal(seed, 0.1);
        for (auto& w : conv_w_) w.init_xavier(seed);
        for (auto& b : conv_b_) b.v.setZero();
    }

    std::vector<Param*> params() {
        std::vector<Param*> out{&embedding_};
        for (std::size_t i = 0; i < conv_w_.size(); ++i) {
            out.push_back(&conv_w_[i]);
            out.push_back(&conv_b_[i]);
        }
        return out;
    }

    int out_dim() const { return cfg_.out_dim(); }

    // sequences: token ids per node. Returns N x out_dim semantic vectors.
    Eigen::MatrixXd forward(const std::vector<std::vector<int>>& sequences, bool need_grad) {
        const int n = static_cast<int>(sequences.size());
        const int c = cfg_.channels;
        cache_.clear();
        cache_.resize(cfg_.kernels.size());
        lengths_.resize(n);
        tokens_.resize(n);
        for (int i = 0; i < n; ++i) {
            const auto& seq = sequences[i];
            if (seq.empty()) throw ConfigError("empty token sequence");
            int len = std::min<int>(static_cast<int>(seq.size()), cfg_.max_len);
            lengths_[i] = len;
            tokens_[i].assign(seq.begin(), seq.begin() + len);
            for (int t : tokens_[i])
                if (t < 0 || t >= cfg_.vocab_size)
                    throw ConfigError("token id out of embedding range: " + std::to_string(t));
        }
        need_grad_ = need_grad;

        Eigen::MatrixXd out(n, out_dim());
        for (std::size_t ki = 0; ki < cfg_.kernels.size(); ++ki) {
            const int k = cfg_.kernels[ki];
            KernelCache& kc = cache_[ki];
            kc.win_start.assign(static_cast<std::size_t>(n) + 1, 0);
            for (int i = 0; i < n; ++i)
                kc.win_start[static_cast<std::size_t>(i) + 1] =
                    kc.win_start[i] + (lengths_[i] >= k ? lengths_[i] - k + 1 : 1);
            const int total = kc.win_start[static_cast<std::size_t>(n)];

            RowMat cols = Eigen::MatrixXd::Zero(total, static_cast<Eigen::Index>(k) *
                                                                    cfg_.embed_dim);
            for (int i = 0; i < n; ++i) {
                int base = kc.win_start[i];
                int wins = kc.win_start[static_cast<std::size_t>(i) + 1] - base;
                for (int w = 0; w < wins; ++w)
                    for (int j = 0; j < k; ++j) {
                        int pos = w + j;
                        if (pos >= lengths_[i]) continue;  // zero-padded tail
                        cols.block(base + w, static_cast<Eigen::Index>(j) * cfg_.embed_dim, 1,
                                   cfg_.embed_dim) =
                            embedding_.v.row(tokens_[i][static_cast<std::size_t>(pos)]);
                    }
            }
            RowMat pre = (cols * conv_w_[ki].v).rowwise() +
                                  conv_b_[ki].v.col(0).transpose();
            RowMat act = pre.cwiseMax(0.0);

            kc.argmax.resize(n, c);
            for (int i = 0; i < n; ++i) {
                int base = kc.win_start[i];
                int wins = kc.win_start[static_cast<std::size_t>(i) + 1] - base;
                for (int ch = 0; ch < c; ++ch) {
                    int best = base;
                    for (int w = 1; w < wins; ++w)
                        if (act(base + w, ch) > act(best, ch)) best = base + w;
                    kc.argmax(i, ch) = best;
                    out(i, static_cast<Eigen::Index>(ki) * c + ch) = act(best, ch);
                }
            }
            if (need_grad) {
                kc.cols = std::move(cols);
                kc.pre = std::move(pre);
            }
        }
        return out;
    }

    // Accumulates parameter gradients for the last forward pass.
    void backward(const Eigen::MatrixXd& d_out) {
        if (!need_grad_) throw NumericError("sentence encoder forward ran without need_grad");
        const int n = static_cast<int>(lengths_.size());
        const int c = cfg_.channels;
        for (std::size_t ki = 0; ki < cfg_.kernels.size(); ++ki) {
            const int k = cfg_.kernels[ki];
            KernelCache& kc = cache_[ki];
            RowMat d_act =
                Eigen::MatrixXd::Zero(kc.pre.rows(), kc.pre.cols());
            for (int i = 0; i < n; ++i)
                for (int ch = 0; ch < c; ++ch)
                    d_act(kc.argmax(i, ch), ch) +=
                        d_out(i, static_cast<Eigen::Index>(ki) * c + ch);
            RowMat d_pre =
                d_act.cwiseProduct((kc.pre.array() > 0.0).cast<double>().matrix());
            conv_w_[ki].g += kc.cols.transpose() * d_pre;
            conv_b_[ki].g.col(0) += d_pre.colwise().sum().transpose();
            RowMat d_cols = d_pre * conv_w_[ki].v.transpose();
            for (int i = 0; i < n; ++i) {
                int base = kc.win_start[i];
                int wins = kc.win_start[static_cast<std::size_t>(i) + 1] - base;
                for (int w = 0; w < wins; ++w)
                    for (int j = 0; j < k; ++j) {
                        int pos = w + j;
                        if (pos >= lengths_[i]) continue;
                        embedding_.g.row(tokens_[i][static_cast<std::size_t>(pos)]) +=
                            d_cols.block(base + w, static_cast<Eigen::Index>(j) * cfg_.embed_dim,
                                         1, cfg_.embed_dim);
                    }
            }
        }
    }

    const SentenceEncoderConfig& config() const { return cfg_; }
    Param& embedding() { return embedding_; }

private:
    struct KernelCache {
        std::vector<int> win_start;
        RowMat cols;  // im2col buffer
        RowMat pre;   // pre-activation conv output
        Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> argmax;
    };

    SentenceEncoderConfig cfg_;
    Param embedding_;
    std::vector<Param> conv_w_, conv_b_;

    std::vector<KernelCache> cache_;
    std::vector<int> lengths_;
    std::vector<std::vector<int>> tokens_;
    bool need_grad_ = false;
};

}  // namespace gsdfuse
