#pragma once

// Local topological context: two message-passing blocks, each an 8-head
// additive-attention aggregation over the node's neighbourhood (self-loop
// included) followed by a pointwise feed-forward with an internal ReLU.
// Node states enter through a linear projection of the semantic vectors.

#include <vector>

#include <Eigen/Dense>

#include "gsdfuse/common.hpp"
#include "gsdfuse/nn_core.hpp"

namespace gsdfuse {

struct AttentionGnnConfig {
    int in_dim = 384;
    int dim = 192;
    int heads = 8;
    int layers = 2;
    double dropout = 0.2;

    int head_dim() const { return dim / heads; }
};

// Incoming-arc adjacency in CSR form; every node carries a self-loop.
struct ArcIndex {
    std::vector<int> start;  // size N+1
    std::vector<int> src;    // arc source node, grouped by destination

    static ArcIndex build(int n, const std::vector<std::pair<int, int>>& edges,
                          bool self_loops) {
        std::vector<std::vector<int>> nbr(static_cast<std::size_t>(n));
        for (auto [a, b] : edges) {
            nbr[static_cast<std::size_t>(a)].push_back(b);
            nbr[static_cast<std::size_t>(b)].push_back(a);
        }
        ArcIndex idx;
        idx.start.assign(static_cast<std::size_t>(n) + 1, 0);
        for (int v = 0; v < n; ++v)
            idx.start[static_cast<std::size_t>(v) + 1] =
                idx.start[v] + static_cast<int>(nbr[static_cast<std::size_t>(v)].size()) +
                (self_loops ? 1 : 0);
        idx.src.resize(static_cast<std::size_t>(idx.start[static_cast<std::size_t>(n)]));
        for (int v = 0; v < n; ++v) {
            int at = idx.start[v];
            if (self_loops) idx.src[static_cast<std::size_t>(at++)] = v;
            for (int u : nbr[static_cast<std::size_t>(v)]) idx.src[static_cast<std::size_t>(at++)] = u;
        }
        return idx;
    }

    int arcs() const { return start.back(); }
};

class AttentionGnn {
public:
    explicit AttentionGnn(const AttentionGnnConfig& cfg) : cfg_(cfg) {
        if (cfg.dim % cfg.heads != 0) throw ConfigError("gnn dim must divide by head count");
        input_w_ = Param("gnn.input.w", cfg.in_dim, cfg.dim);
        input_b_ = Param("gnn.input.b", cfg.dim, 1);
        for (int l = 1; l <= cfg.layers; ++l) {
            std::string p = "gnn.layer" + std::to_string(l) + ".";
            layers_.push_back(Layer{
                Param(p + "wq", cfg.dim, cfg.dim), Param(p + "wk", cfg.dim, cfg.dim),
                Param(p + "wv", cfg.dim, cfg.dim), Param(p + "attn", cfg.head_dim(), cfg.heads),
                Param(p + "ff.w1", cfg.dim, cfg.dim), Param(p + "ff.b1", cfg.dim, 1),
                Param(p + "ff.w2", cfg.dim, cfg.dim), Param(p + "ff.b2", cfg.dim, 1)});
        }
    }

    void init(std::uint64_t seed) {
        input_w_.init_xavier(seed);
        input_b_.v.setZero();
        for (auto& l : layers_) {
            l.wq.init_xavier(seed);
            l.wk.init_xavier(seed);
            l.wv.init_xavier(seed);
            l.attn.init_xavier(seed);
            l.ff_w1.init_xavier(seed);
            l.ff_b1.v.setZero();
            l.ff_w2.init_xavier(seed);
            l.ff_b2.v.setZero();
        }
    }

    std::vector<Param*> params() {
        std::vector<Param*> out{&input_w_, &input_b_};
        for (auto& l : layers_)
            for (Param* p : {&l.wq, &l.wk, &l.wv, &l.attn, &l.ff_w1, &l.ff_b1, &l.ff_w2, &l.ff_b2})
                out.push_back(p);
        return out;
    }

    Eigen::MatrixXd forward(const Eigen::MatrixXd& features, const ArcIndex& arcs, bool train,
                            bool need_grad, Rng& dropout_rng) {
        if (features.cols() != cfg_.in_dim) throw ConfigError("gnn input width mismatch");
        const int n = static_cast<int>(features.rows());
        need_grad_ = need_grad;
        arcs_ = &arcs;
        caches_.assign(static_cast<std::size_t>(cfg_.layers), LayerCache{});

        in_features_ = features;
        RowMat h =
            (features * input_w_.v).rowwise() + input_b_.v.col(0).transpose();
        for (int li = 0; li < cfg_.layers; ++li) {
            Layer& L = layers_[static_cast<std::size_t>(li)];
            LayerCache& C = caches_[static_cast<std::size_t>(li)];
            const int hd = cfg_.head_dim();

            RowMat q = h * L.wq.v;
            RowMat k = h * L.wk.v;
            RowMat vv = h * L.wv.v;

            RowMat z(arcs.arcs(), cfg_.dim);      // tanh(q_v + k_u) per arc
            RowMat alpha(arcs.arcs(), cfg_.heads);  // attention weights per arc
            RowMat attn_out = Eigen::MatrixXd::Zero(n, cfg_.dim);
            for (int v = 0; v < n; ++v) {
                int a0 = arcs.start[v], a1 = arcs.start[static_cast<std::size_t>(v) + 1];
                for (int a = a0; a < a1; ++a)
                    z.row(a) = (q.row(v) + k.row(arcs.src[static_cast<std::size_t>(a)]))
                                   .array()
                                   .tanh();
                for (int hix = 0; hix < cfg_.heads; ++hix) {
                    double mx = -1e300;
                    for (int a = a0; a < a1; ++a) {
                        double e = z.row(a).segment(hix * hd, hd).dot(L.attn.v.col(hix));
                        alpha(a, hix) = e;
                        mx = std::max(mx, e);
                    }
                    double sum = 0.0;
                    for (int a = a0; a < a1; ++a) {
                        alpha(a, hix) = std::exp(alpha(a, hix) - mx);
                        sum += alpha(a, hix);
                    }
                    for (int a = a0; a < a1; ++a) {
                        alpha(a, hix) /= sum;
                        attn_out.row(v).segment(hix * hd, hd) +=
                            alpha(a, hix) *
                            vv.row(arcs.src[static_cast<std::size_t>(a)]).segment(hix * hd, hd);
                    }
                }
            }

            RowMat drop1 = train ? dropout_mask(n, cfg_.dim, cfg_.dropout, dropout_rng)
                                          : Eigen::MatrixXd::Ones(n, cfg_.dim);
            RowMat a1 = attn_out.cwiseProduct(drop1);
            RowMat z1 = (a1 * L.ff_w1.v).rowwise() + L.ff_b1.v.col(0).transpose();
            RowMat r1 = z1.cwiseMax(0.0);
            RowMat o2 = (r1 * L.ff_w2.v).rowwise() + L.ff_b2.v.col(0).transpose();
            RowMat drop2 = train ? dropout_mask(n, cfg_.dim, cfg_.dropout, dropout_rng)
                                          : Eigen::MatrixXd::Ones(n, cfg_.dim);
            RowMat out = o2.cwiseProduct(drop2);

            if (need_grad) {
                C.h_in = h;
                C.q = std::move(q);
                C.k = std::move(k);
                C.v = std::move(vv);
                C.z = std::move(z);
                C.alpha = std::move(alpha);
                C.attn_out = std::move(attn_out);
                C.drop1 = std::move(drop1);
                C.a1 = std::move(a1);
                C.z1 = std::move(z1);
                C.r1 = std::move(r1);
                C.drop2 = std::move(drop2);
            }
            h = std::move(out);
        }
        return h;
    }

    // Returns the gradient w.r.t. the input features.
    Eigen::MatrixXd backward(const Eigen::MatrixXd& d_out) {
        if (!need_grad_) throw NumericError("gnn forward ran without need_grad");
        const ArcIndex& arcs = *arcs_;
        const int n = static_cast<int>(d_out.rows());
        const int hd = cfg_.head_dim();
        RowMat dh = d_out;
        for (int li = cfg_.layers - 1; li >= 0; --li) {
            Layer& L = layers_[static_cast<std::size_t>(li)];
            LayerCache& C = caches_[static_cast<std::size_t>(li)];

            RowMat d_o2 = dh.cwiseProduct(C.drop2);
            L.ff_b2.g.col(0) += d_o2.colwise().sum().transpose();
            L.ff_w2.g += C.r1.transpose() * d_o2;
            RowMat d_r1 = d_o2 * L.ff_w2.v.transpose();
            RowMat d_z1 =
                d_r1.cwiseProduct((C.z1.array() > 0.0).cast<double>().matrix());
            L.ff_b1.g.col(0) += d_z1.colwise().sum().transpose();
            L.ff_w1.g += C.a1.transpose() * d_z1;
            RowMat d_a1 = d_z1 * L.ff_w1.v.transpose();
            RowMat d_attn_out = d_a1.cwiseProduct(C.drop1);

            RowMat dq = Eigen::MatrixXd::Zero(n, cfg_.dim);
            RowMat dk = Eigen::MatrixXd::Zero(n, cfg_.dim);
            RowMat dv = Eigen::MatrixXd::Zero(n, cfg_.dim);
            for (int v = 0; v < n; ++v) {
                int a0 = arcs.start[v], a1 = arcs.start[static_cast<std::size_t>(v) + 1];
                for (int hix = 0; hix < cfg_.heads; ++hix) {
                    auto dm = d_attn_out.row(v).segment(hix * hd, hd);
                    // d alpha, then softmax jacobian
                    double inner = 0.0;
                    std::vector<double> d_alpha(static_cast<std::size_t>(a1 - a0));
                    for (int a = a0; a < a1; ++a) {
                        int u = arcs.src[static_cast<std::size_t>(a)];
                        d_alpha[static_cast<std::size_t>(a - a0)] =
                            dm.dot(C.v.row(u).segment(hix * hd, hd));
                        dv.row(u).segment(hix * hd, hd) += C.alpha(a, hix) * dm;
                        inner += C.alpha(a, hix) * d_alpha[static_cast<std::size_t>(a - a0)];
                    }
                    for (int a = a0; a < a1; ++a) {
                        int u = arcs.src[static_cast<std::size_t>(a)];
                        double de =
                            C.alpha(a, hix) * (d_alpha[static_cast<std::size_t>(a - a0)] - inner);
                        for (int c = 0; c < hd; ++c) {
                            double zc = C.z(a, hix * hd + c);
                            double dz = de * L.attn.v(c, hix) * (1.0 - zc * zc);
                            L.attn.g(c, hix) += de * zc;
                            dq(v, hix * hd + c) += dz;
                            dk(u, hix * hd + c) += dz;
                        }
                    }
                }
            }
            L.wq.g += C.h_in.transpose() * dq;
            L.wk.g += C.h_in.transpose() * dk;
            L.wv.g += C.h_in.transpose() * dv;
            dh = dq * L.wq.v.transpose() + dk * L.wk.v.transpose() + dv * L.wv.v.transpose();
        }
        input_b_.g.col(0) += dh.colwise().sum().transpose();
        input_w_.g += in_features_.transpose() * dh;
        return dh * input_w_.v.transpose();
    }

    const AttentionGnnConfig& config() const { return cfg_; }

private:
    struct Layer {
        Param wq, wk, wv, attn, ff_w1, ff_b1, ff_w2, ff_b2;
    };
    struct LayerCache {
        RowMat h_in, q, k, v, z, alpha, attn_out, drop1, a1, z1, r1, drop2;
    };

    AttentionGnnConfig cfg_;
    Param input_w_, input_b_;
    std::vector<Layer> layers_;

    std::vector<LayerCache> caches_;
    Eigen::MatrixXd in_features_;
    const ArcIndex* arcs_ = nullptr;
    bool need_grad_ = false;
};

}  // namespace gsdfuse
