#pragma once

// Global structural context: two sum-aggregation layers with learnable
// self-weight epsilon and a two-affine MLP each, followed by a per-component
// mean readout that broadcasts one structural summary vector to every node
// of its connected component.

#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "gsdfuse/common.hpp"
#include "gsdfuse/nn_core.hpp"

namespace gsdfuse {

struct GinConfig {
    int in_dim = 384;
    int dim = 192;
    int layers = 2;
    double dropout = 0.1;
};

// Raw sum aggregation: (1 + eps) * own state plus the plain neighbour sum.
inline Eigen::MatrixXd gin_aggregate(const Eigen::MatrixXd& h,
                                     const std::vector<std::pair<int, int>>& edges, double eps) {
    Eigen::MatrixXd agg = (1.0 + eps) * h;
    for (auto [a, b] : edges) {
        agg.row(a) += h.row(b);
        agg.row(b) += h.row(a);
    }
    return agg;
}

class GinStack {
public:
    explicit GinStack(const GinConfig& cfg) : cfg_(cfg) {
        for (int l = 1; l <= cfg.layers; ++l) {
            std::string p = "gin.layer" + std::to_string(l) + ".";
            int in = l == 1 ? cfg.in_dim : cfg.dim;
            layers_.push_back(Layer{Param(p + "eps", 1, 1), Param(p + "mlp.w1", in, cfg.dim),
                                    Param(p + "mlp.b1", cfg.dim, 1),
                                    Param(p + "mlp.w2", cfg.dim, cfg.dim),
                                    Param(p + "mlp.b2", cfg.dim, 1)});
        }
    }

    void init(std::uint64_t seed) {
        for (auto& l : layers_) {
            l.eps.v.setZero();  // epsilon starts at 0
            l.w1.init_xavier(seed);
            l.b1.v.setZero();
            l.w2.init_xavier(seed);
            l.b2.v.setZero();
        }
    }

    std::vector<Param*> params() {
        std::vector<Param*> out;
        for (auto& l : layers_)
            for (Param* p : {&l.eps, &l.w1, &l.b1, &l.w2, &l.b2}) out.push_back(p);
        return out;
    }

    Eigen::MatrixXd forward(const Eigen::MatrixXd& features,
                            const std::vector<std::pair<int, int>>& edges, bool train,
                            bool need_grad, Rng& dropout_rng) {
        if (features.cols() != cfg_.in_dim) throw ConfigError("gin input width mismatch");
        need_grad_ = need_grad;
        edges_ = &edges;
        caches_.assign(layers_.size(), LayerCache{});
        Eigen::MatrixXd h = features;
        for (std::size_t li = 0; li < layers_.size(); ++li) {
            Layer& L = layers_[li];
            LayerCache& C = caches_[li];
            Eigen::MatrixXd agg = gin_aggregate(h, edges, L.eps.v(0, 0));
            Eigen::MatrixXd z1 = (agg * L.w1.v).rowwise() + L.b1.v.col(0).transpose();
            Eigen::MatrixXd r1 = z1.cwiseMax(0.0);
            Eigen::MatrixXd z2 = (r1 * L.w2.v).rowwise() + L.b2.v.col(0).transpose();
            Eigen::MatrixXd mask = train
                                       ? dropout_mask(z2.rows(), z2.cols(), cfg_.dropout,
                                                      dropout_rng)
                                       : Eigen::MatrixXd::Ones(z2.rows(), z2.cols());
            Eigen::MatrixXd out = z2.cwiseProduct(mask);
            if (need_grad) {
                C.h_in = std::move(h);
                C.agg = std::move(agg);
                C.z1 = std::move(z1);
                C.r1 = std::move(r1);
                C.mask = std::move(mask);
            }
            h = std::move(out);
        }
        return h;
    }

    Eigen::MatrixXd backward(const Eigen::MatrixXd& d_out) {
        if (!need_grad_) throw NumericError("gin forward ran without need_grad");
        Eigen::MatrixXd dh = d_out;
        for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
            Layer& L = layers_[static_cast<std::size_t>(li)];
            LayerCache& C = caches_[static_cast<std::size_t>(li)];
            Eigen::MatrixXd d_z2 = dh.cwiseProduct(C.mask);
            L.b2.g.col(0) += d_z2.colwise().sum().transpose();
            L.w2.g += C.r1.transpose() * d_z2;
            Eigen::MatrixXd d_r1 = d_z2 * L.w2.v.transpose();
            Eigen::MatrixXd d_z1 =
                d_r1.cwiseProduct((C.z1.array() > 0.0).cast<double>().matrix());
            L.b1.g.col(0) += d_z1.colwise().sum().transpose();
            L.w1.g += C.agg.transpose() * d_z1;
            Eigen::MatrixXd d_agg = d_z1 * L.w1.v.transpose();
            L.eps.g(0, 0) += d_agg.cwiseProduct(C.h_in).sum();
            // sum aggregation is symmetric, so its adjoint has the same form
            dh = gin_aggregate(d_agg, *edges_, L.eps.v(0, 0));
        }
        return dh;
    }

private:
    struct Layer {
        Param eps, w1, b1, w2, b2;
    };
    struct LayerCache {
        Eigen::MatrixXd h_in, agg, z1, r1, mask;
    };

    GinConfig cfg_;
    std::vector<Layer> layers_;
    std::vector<LayerCache> caches_;
    const std::vector<std::pair<int, int>>* edges_ = nullptr;
    bool need_grad_ = false;
};

// Connected components of the visible graph.
inline std::vector<int> connected_components(int n,
                                             const std::vector<std::pair<int, int>>& edges) {
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    };
    for (auto [a, b] : edges) parent[static_cast<std::size_t>(find(a))] = find(b);
    std::vector<int> comp(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) comp[static_cast<std::size_t>(i)] = find(i);
    return comp;
}

// Mean of the stack's output over each connected component, broadcast back
// to the component's nodes.
class ComponentMean {
public:
    Eigen::MatrixXd forward(const Eigen::MatrixXd& h,
                            const std::vector<std::pair<int, int>>& edges) {
        const int n = static_cast<int>(h.rows());
        comp_ = connected_components(n, edges);
        comp_size_.assign(static_cast<std::size_t>(n), 0);
        for (int i = 0; i < n; ++i) comp_size_[static_cast<std::size_t>(comp_[i])]++;
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n, h.cols());
        for (int i = 0; i < n; ++i) sums.row(comp_[i]) += h.row(i);
        Eigen::MatrixXd out(n, h.cols());
        for (int i = 0; i < n; ++i)
            out.row(i) = sums.row(comp_[i]) / static_cast<double>(comp_size_[comp_[i]]);
        return out;
    }

    Eigen::MatrixXd backward(const Eigen::MatrixXd& d_out) {
        const int n = static_cast<int>(d_out.rows());
        Eigen::MatrixXd dsums = Eigen::MatrixXd::Zero(n, d_out.cols());
        for (int i = 0; i < n; ++i) dsums.row(comp_[i]) += d_out.row(i);
        Eigen::MatrixXd dh(n, d_out.cols());
        for (int i = 0; i < n; ++i)
            dh.row(i) = dsums.row(comp_[i]) / static_cast<double>(comp_size_[comp_[i]]);
        return dh;
    }

private:
    std::vector<int> comp_;
    std::vector<int> comp_size_;
};

}  // namespace gsdfuse
