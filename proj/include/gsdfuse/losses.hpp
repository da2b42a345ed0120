#pragma once

// Training objectives: weighted cross-entropy, synthetic minority
// oversampling in the fused embedding space, semi-hard triplet mining, the
// hinge triplet loss, and the weighted composite of all three.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "gsdfuse/common.hpp"

namespace gsdfuse {

// --- cross-entropy -----------------------------------------------------------

struct CeResult {
    double loss = 0.0;
    Eigen::MatrixXd d_logits;
};

// Per-sample weighted softmax cross-entropy over two logits; weights
// normalize to a weighted mean. Empty weights mean uniform.
inline CeResult cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& labels,
                              const Eigen::VectorXd& weights = {}) {
    const int n = static_cast<int>(logits.rows());
    if (static_cast<int>(labels.size()) != n) throw ConfigError("label count mismatch");
    Eigen::VectorXd w = weights.size() == 0 ? Eigen::VectorXd::Ones(n) : weights;
    if (w.size() != n) throw ConfigError("weight count mismatch");
    double wsum = w.sum();
    CeResult res;
    res.d_logits = Eigen::MatrixXd::Zero(n, 2);
    for (int i = 0; i < n; ++i) {
        double m = std::max(logits(i, 0), logits(i, 1));
        double e0 = std::exp(logits(i, 0) - m), e1 = std::exp(logits(i, 1) - m);
        double z = e0 + e1;
        double p0 = e0 / z, p1 = e1 / z;
        int y = labels[static_cast<std::size_t>(i)];
        res.loss += -w[i] * std::log(y == 1 ? p1 : p0);
        res.d_logits(i, 0) = w[i] * (p0 - (y == 0 ? 1.0 : 0.0));
        res.d_logits(i, 1) = w[i] * (p1 - (y == 1 ? 1.0 : 0.0));
    }
    res.loss /= wsum;
    res.d_logits /= wsum;
    return res;
}

// --- SMOTE -------------------------------------------------------------------

struct SmoteConfig {
    int k_neighbors = 5;
    int n_synth_per_batch = 64;
    double weight = 0.5;  // loss share of the synthetic batch
    std::uint64_t seed = 42;
};

inline Eigen::RowVectorXd smote_interpolate(const Eigen::RowVectorXd& xi,
                                            const Eigen::RowVectorXd& xj, double lambda) {
    return xi + lambda * (xj - xi);
}

// Synthetic minority samples: x_i + lambda * (x_j - x_i) with x_j one of
// x_i's k nearest minority neighbours and lambda uniform on [0,1]. Needs at
// least two minority rows; the caller skips the step otherwise.
inline Eigen::MatrixXd smote_synthesize(const Eigen::MatrixXd& minority, const SmoteConfig& cfg,
                                        Rng& rng) {
    const int m = static_cast<int>(minority.rows());
    if (m < 2) throw ConfigError("smote needs at least two minority samples");
    if (cfg.k_neighbors < 1) throw ConfigError("k_neighbors must be >= 1");
    const int k = std::min(cfg.k_neighbors, m - 1);

    // k nearest minority neighbours per row, self excluded, ties by index
    std::vector<std::vector<int>> nn(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        std::vector<std::pair<double, int>> d;
        d.reserve(static_cast<std::size_t>(m) - 1);
        for (int j = 0; j < m; ++j)
            if (j != i) d.push_back({(minority.row(i) - minority.row(j)).squaredNorm(), j});
        std::sort(d.begin(), d.end());
        for (int t = 0; t < k; ++t) nn[static_cast<std::size_t>(i)].push_back(d[static_cast<std::size_t>(t)].second);
    }

    Eigen::MatrixXd out(cfg.n_synth_per_batch, minority.cols());
    for (int s = 0; s < cfg.n_synth_per_batch; ++s) {
        int i = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(m)));
        int j = nn[static_cast<std::size_t>(i)][uniform_below(rng, static_cast<std::uint64_t>(k))];
        double lambda = uniform01(rng);
        out.row(s) = smote_interpolate(minority.row(i), minority.row(j), lambda);
    }
    return out;
}

// --- triplets ----------------------------------------------------------------

enum class Mining { semi_hard, hard, none };

struct TripletConfig {
    double margin = 1.0;
    int p = 2;  // distance exponent: 1 Manhattan, 2 Euclidean
    double weight = 0.1;
    Mining mining = Mining::semi_hard;
    std::size_t max_pairs = 0;  // 0 = every anchor-positive pair
    std::uint64_t seed = 42;
};

struct Triple {
    int a = 0, p = 0, n = 0;
    bool fallback = false;  // no semi-hard negative existed in the band
};

namespace detail {

inline double pair_distance(const Eigen::MatrixXd& emb, int i, int j, int p) {
    if (p == 1) return (emb.row(i) - emb.row(j)).cwiseAbs().sum();
    return (emb.row(i) - emb.row(j)).norm();
}

}  // namespace detail

// For every anchor-positive pair (ordered, same label) select a negative:
// semi-hard picks the closest negative inside the margin band
// (D(a,p), D(a,p)+margin), falling back to the overall closest when the band
// is empty; hard always takes the closest; none draws uniformly. max_pairs
// caps the pair enumeration by stratified subsampling (half per class where
// possible).
inline std::vector<Triple> mine_triplets(const Eigen::MatrixXd& emb,
                                         const std::vector<int>& labels,
                                         const TripletConfig& cfg) {
    const int n = static_cast<int>(emb.rows());
    if (static_cast<int>(labels.size()) != n) throw ConfigError("label count mismatch");
    if (cfg.p != 1 && cfg.p != 2) throw ConfigError("distance exponent must be 1 or 2");
    if (cfg.margin <= 0.0) throw ConfigError("margin must be positive");

    std::vector<int> of_class[2];
    for (int i = 0; i < n; ++i) {
        int y = labels[static_cast<std::size_t>(i)];
        if (y != 0 && y != 1) throw ConfigError("labels must be 0/1");
        of_class[y].push_back(i);
    }
    std::vector<Triple> out;
    if (of_class[0].empty() || of_class[1].empty()) return out;  // single class: nothing to push apart

    // candidate anchor-positive pairs per class
    std::vector<std::pair<int, int>> pairs[2];
    for (int y = 0; y < 2; ++y) {
        const auto& members = of_class[y];
        for (int a : members)
            for (int p : members)
                if (a != p) pairs[y].push_back({a, p});
    }
    if (cfg.max_pairs > 0 && pairs[0].size() + pairs[1].size() > cfg.max_pairs) {
        Rng rng(derive_seed(cfg.seed, 0x545249ULL));  // "TRI"
        std::size_t half = cfg.max_pairs / 2;
        auto take = [&](std::vector<std::pair<int, int>>& v, std::size_t want) {
            if (v.size() <= want) return;
            for (std::size_t i = 0; i < want; ++i) {
                std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, v.size() - i));
                std::swap(v[i], v[j]);
            }
            v.resize(want);
        };
        // half the budget per class, unused share flowing to the other
        std::size_t w0 = std::min(pairs[0].size(), half);
        std::size_t w1 = std::min(pairs[1].size(), cfg.max_pairs - w0);
        w0 = std::min(pairs[0].size(), cfg.max_pairs - w1);
        take(pairs[0], w0);
        take(pairs[1], w1);
    }

    Rng none_rng(derive_seed(cfg.seed, 0x4e4f4eULL));
    for (int y = 0; y < 2; ++y) {
        if (pairs[y].empty()) continue;
        const auto& negatives = of_class[1 - y];
        // negatives ordered by (distance, index) per distinct anchor; the
        // Euclidean case batches the distances through one Gram product
        std::vector<int> anchor_row(static_cast<std::size_t>(n), -1);
        std::vector<int> anchors;
        for (auto [a, p] : pairs[y]) {
            (void)p;
            if (anchor_row[static_cast<std::size_t>(a)] < 0) {
                anchor_row[static_cast<std::size_t>(a)] = static_cast<int>(anchors.size());
                anchors.push_back(a);
            }
        }
        std::vector<std::vector<std::pair<double, int>>> sorted_neg(anchors.size());
        if (cfg.p == 2) {
            Eigen::MatrixXd am(static_cast<Eigen::Index>(anchors.size()), emb.cols());
            Eigen::MatrixXd nm(static_cast<Eigen::Index>(negatives.size()), emb.cols());
            for (std::size_t i = 0; i < anchors.size(); ++i) am.row(static_cast<Eigen::Index>(i)) = emb.row(anchors[i]);
            for (std::size_t j = 0; j < negatives.size(); ++j) nm.row(static_cast<Eigen::Index>(j)) = emb.row(negatives[j]);
            Eigen::VectorXd a2 = am.rowwise().squaredNorm();
            Eigen::VectorXd n2 = nm.rowwise().squaredNorm();
            Eigen::MatrixXd gram = am * nm.transpose();
            for (std::size_t i = 0; i < anchors.size(); ++i) {
                auto& sn = sorted_neg[i];
                sn.reserve(negatives.size());
                for (std::size_t j = 0; j < negatives.size(); ++j) {
                    double d2 = a2[static_cast<Eigen::Index>(i)] + n2[static_cast<Eigen::Index>(j)] -
                                2.0 * gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                    sn.push_back({std::sqrt(std::max(0.0, d2)), negatives[j]});
                }
                std::sort(sn.begin(), sn.end());
            }
        } else {
            for (std::size_t i = 0; i < anchors.size(); ++i) {
                auto& sn = sorted_neg[i];
                sn.reserve(negatives.size());
                for (int neg : negatives)
                    sn.push_back({detail::pair_distance(emb, anchors[i], neg, cfg.p), neg});
                std::sort(sn.begin(), sn.end());
            }
        }
        for (auto [a, p] : pairs[y]) {
            auto& sn = sorted_neg[static_cast<std::size_t>(anchor_row[static_cast<std::size_t>(a)])];
            Triple t;
            t.a = a;
            t.p = p;
            if (cfg.mining == Mining::none) {
                t.n = negatives[uniform_below(none_rng, negatives.size())];
            } else if (cfg.mining == Mining::hard) {
                t.n = sn.front().second;
            } else {
                double dap = detail::pair_distance(emb, a, p, cfg.p);
                auto it = std::upper_bound(sn.begin(), sn.end(),
                                           std::make_pair(dap, std::numeric_limits<int>::max()));
                if (it != sn.end() && it->first < dap + cfg.margin) {
                    t.n = it->second;  // nearest negative strictly inside the band
                } else {
                    t.n = sn.front().second;
                    t.fallback = true;
                }
            }
            out.push_back(t);
        }
    }
    return out;
}

struct TripletLossResult {
    double loss = 0.0;
    Eigen::MatrixXd d_emb;
};

// Mean hinge over the mined triples: max(0, D(a,p) - D(a,n) + margin).
inline TripletLossResult triplet_loss(const std::vector<Triple>& triples,
                                      const Eigen::MatrixXd& emb, const TripletConfig& cfg) {
    TripletLossResult res;
    res.d_emb = Eigen::MatrixXd::Zero(emb.rows(), emb.cols());
    if (triples.empty()) return res;
    const double inv = 1.0 / static_cast<double>(triples.size());
    for (const Triple& t : triples) {
        double dap = detail::pair_distance(emb, t.a, t.p, cfg.p);
        double dan = detail::pair_distance(emb, t.a, t.n, cfg.p);
        double hinge = dap - dan + cfg.margin;
        if (hinge <= 0.0) continue;
        res.loss += hinge * inv;
        if (cfg.p == 2) {
            if (dap > 0.0) {
                Eigen::RowVectorXd g = (emb.row(t.a) - emb.row(t.p)) / dap * inv;
                res.d_emb.row(t.a) += g;
                res.d_emb.row(t.p) -= g;
            }
            if (dan > 0.0) {
                Eigen::RowVectorXd g = (emb.row(t.a) - emb.row(t.n)) / dan * inv;
                res.d_emb.row(t.a) -= g;
                res.d_emb.row(t.n) += g;
            }
        } else {
            Eigen::RowVectorXd sp =
                (emb.row(t.a) - emb.row(t.p)).unaryExpr([](double x) {
                    return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                });
            Eigen::RowVectorXd sn =
                (emb.row(t.a) - emb.row(t.n)).unaryExpr([](double x) {
                    return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                });
            res.d_emb.row(t.a) += (sp - sn) * inv;
            res.d_emb.row(t.p) -= sp * inv;
            res.d_emb.row(t.n) += sn * inv;
        }
    }
    return res;
}

// --- composite ---------------------------------------------------------------

struct CompositeWeights {
    double smote = 0.5;
    double triplet = 0.1;
    bool smote_enabled = true;
    bool triplet_enabled = true;
};

inline double composite_loss(double ce_real, double ce_smote, double l_triplet,
                             const CompositeWeights& w) {
    double total = ce_real;
    if (w.smote_enabled) total += w.smote * ce_smote;
    if (w.triplet_enabled) total += w.triplet * l_triplet;
    return total;
}

}  // namespace gsdfuse
