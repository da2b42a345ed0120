#pragma once

// The full detector: semantic encoding, local attention context, global
// structural summaries, gated fusion, and the binary head, wired for one
// forward/backward pass over a node-induced graph. Ablation switches remove
// the structural summary (sequence shrinks to two positions) or swap gated
// fusion for concat+affine.

#include <memory>
#include <vector>

#include "gsdfuse/fusion.hpp"
#include "gsdfuse/gin.hpp"
#include "gsdfuse/gnn.hpp"
#include "gsdfuse/nn_core.hpp"
#include "gsdfuse/sca.hpp"

namespace gsdfuse {

struct ModelConfig {
    int vocab_size = 0;
    int embed_dim = 32;
    int channels = 128;
    std::vector<int> kernels = {3, 4, 5};
    int max_len = 32;
    int gnn_dim = 192;
    int gnn_heads = 8;
    int gnn_layers = 2;
    int gin_dim = 192;
    int gin_layers = 2;
    int fuse_dim = 192;
    int fuse_expansion = 2;
    double dropout = 0.2;
    double gin_dropout = 0.1;
    bool use_gau = true;
    bool use_gin = true;

    int semantic_dim() const { return channels * static_cast<int>(kernels.size()); }
};

struct ModelActivations {
    Eigen::MatrixXd s;       // N x semantic_dim
    Eigen::MatrixXd h;       // N x gnn_dim
    Eigen::MatrixXd g;       // N x gin_dim (empty when the summary is ablated)
    Eigen::MatrixXd f;       // N x fuse_dim
    Eigen::MatrixXd logits;  // N x 2
};

class GsdFuseModel {
public:
    explicit GsdFuseModel(const ModelConfig& cfg)
        : cfg_(cfg),
          encoder_(SentenceEncoderConfig{cfg.vocab_size, cfg.embed_dim, cfg.channels,
                                         cfg.kernels, cfg.max_len}),
          gnn_(AttentionGnnConfig{cfg.semantic_dim(), cfg.gnn_dim, cfg.gnn_heads, cfg.gnn_layers,
                                  cfg.dropout}),
          gin_(GinConfig{cfg.semantic_dim(), cfg.gin_dim, cfg.gin_layers, cfg.gin_dropout}),
          fusion_(FusionConfig{cfg.semantic_dim(), cfg.gnn_dim, cfg.gin_dim, cfg.fuse_dim,
                               cfg.fuse_expansion, cfg.dropout, cfg.use_gau, cfg.use_gin}),
          head_(cfg.fuse_dim) {}

    void init(std::uint64_t seed) {
        encoder_.init(seed);
        gnn_.init(seed);
        if (cfg_.use_gin) gin_.init(seed);
        fusion_.init(seed);
        head_.init(seed);
    }

    std::vector<Param*> params() {
        std::vector<Param*> out;
        for (Param* p : encoder_.params()) out.push_back(p);
        for (Param* p : gnn_.params()) out.push_back(p);
        if (cfg_.use_gin)
            for (Param* p : gin_.params()) out.push_back(p);
        for (Param* p : fusion_.params()) out.push_back(p);
        for (Param* p : head_.params()) out.push_back(p);
        return out;
    }

    void zero_grads() {
        for (Param* p : params()) p->zero_grad();
    }

    // tokens: per-node sequences; edges: local undirected pairs.
    ModelActivations forward(const std::vector<std::vector<int>>& tokens,
                             const std::vector<std::pair<int, int>>& edges, bool train,
                             bool need_grad, Rng& dropout_rng) {
        ModelActivations acts;
        acts.s = encoder_.forward(tokens, need_grad);
        ArcIndex arcs = ArcIndex::build(static_cast<int>(tokens.size()), edges, true);
        arcs_ = std::move(arcs);
        acts.h = gnn_.forward(acts.s, arcs_, train, need_grad, dropout_rng);
        if (cfg_.use_gin) {
            Eigen::MatrixXd gin_out = gin_.forward(acts.s, edges, train, need_grad, dropout_rng);
            acts.g = pool_.forward(gin_out, edges);
        }
        acts.f = fusion_.forward(acts.s, acts.h, acts.g, train, need_grad, dropout_rng);
        acts.logits = head_.forward(acts.f, need_grad);
        if (!acts.logits.allFinite()) throw NumericError("non-finite logits");
        return acts;
    }

    // d_logits: gradient on the real-node logits; d_f_extra: additional
    // gradient arriving directly at the fused embeddings (triplet term).
    void backward(const Eigen::MatrixXd& d_logits, const Eigen::MatrixXd& d_f_extra) {
        Eigen::MatrixXd d_f = head_.backward(d_logits);
        if (d_f_extra.size() > 0) d_f += d_f_extra;
        GatedFusion::InputGrads grads = fusion_.backward(d_f);
        Eigen::MatrixXd d_s = grads.ds;
        if (cfg_.use_gin) {
            Eigen::MatrixXd d_gin = pool_.backward(grads.dg);
            d_s += gin_.backward(d_gin);
        }
        d_s += gnn_.backward(grads.dh);
        encoder_.backward(d_s);
    }

    // Head-only pass for detached embeddings (synthetic oversampled rows):
    // gradients stop at the head parameters.
    Eigen::MatrixXd head_forward(const Eigen::MatrixXd& f, bool need_grad) {
        return head_.forward(f, need_grad);
    }
    void head_backward(const Eigen::MatrixXd& d_logits) { head_.backward(d_logits); }

    const ModelConfig& config() const { return cfg_; }
    SentenceEncoder& encoder() { return encoder_; }
    ClassifierHead& head() { return head_; }

private:
    ModelConfig cfg_;
    SentenceEncoder encoder_;
    AttentionGnn gnn_;
    GinStack gin_;
    ComponentMean pool_;
    GatedFusion fusion_;
    ClassifierHead head_;
    ArcIndex arcs_;
};

}  // namespace gsdfuse
