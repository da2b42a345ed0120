#pragma once

// Random-walk subgraph sampling for training: walks of fixed depth start
// from uniformly chosen roots, the visited set (capped by a node budget) is
// taken as a node-induced subgraph. A preliminary sampling pass estimates
// per-node inclusion frequencies that become inverse-frequency loss weights.

#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "gsdfuse/common.hpp"
#include "gsdfuse/forest.hpp"

namespace gsdfuse {

struct SamplerConfig {
    int roots_per_sample = 1000;
    int walk_depth = 2;
    int node_budget = 2000;
    int sample_coverage = 50;

    void validate() const {
        if (roots_per_sample < 1 || walk_depth < 0 || node_budget < 1 || sample_coverage < 1)
            throw ConfigError("sampler parameters must be positive");
        if (node_budget < 1) throw ConfigError("node budget must be >= 1");
    }
};

// A node-induced subgraph in local indexing; node_of maps back to positions
// in the owning view's visible_nodes.
struct Subgraph {
    std::vector<int> node_of;                      // local -> view-local index
    std::vector<int> visit_count;                  // walk visits per kept node
    std::vector<std::pair<int, int>> edges;        // local indices
};

// Adjacency over a view, in view-local indices.
struct ViewGraph {
    std::vector<std::vector<int>> adj;
    std::vector<std::pair<int, int>> edges;  // view-local

    static ViewGraph build(const SplitView& view) {
        ViewGraph g;
        std::unordered_map<int, int> local;
        local.reserve(view.visible_nodes.size());
        for (std::size_t i = 0; i < view.visible_nodes.size(); ++i)
            local[view.visible_nodes[i]] = static_cast<int>(i);
        g.adj.resize(view.visible_nodes.size());
        g.edges.reserve(view.visible_edges.size());
        for (auto [a, b] : view.visible_edges) {
            int la = local.at(a), lb = local.at(b);
            g.adj[static_cast<std::size_t>(la)].push_back(lb);
            g.adj[static_cast<std::size_t>(lb)].push_back(la);
            g.edges.push_back({la, lb});
        }
        return g;
    }

    int size() const { return static_cast<int>(adj.size()); }
};

inline Subgraph sample_subgraph(const ViewGraph& graph, const SamplerConfig& cfg, Rng& rng) {
    cfg.validate();
    const int n = graph.size();
    if (n == 0) throw SamplerError("cannot sample from an empty view");

    // roots without replacement
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const int n_roots = std::min(cfg.roots_per_sample, n);
    for (int i = 0; i < n_roots; ++i) {
        int j = i + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(n - i)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }

    std::vector<char> in(static_cast<std::size_t>(n), 0);
    std::vector<int> visits(static_cast<std::size_t>(n), 0);
    std::vector<int> visited;
    auto visit = [&](int v) {
        visits[static_cast<std::size_t>(v)]++;
        if (!in[static_cast<std::size_t>(v)]) {
            in[static_cast<std::size_t>(v)] = 1;
            visited.push_back(v);
        }
    };
    for (int i = 0; i < n_roots; ++i) {
        int cur = order[static_cast<std::size_t>(i)];
        visit(cur);
        for (int step = 0; step < cfg.walk_depth; ++step) {
            const auto& nb = graph.adj[static_cast<std::size_t>(cur)];
            if (nb.empty()) break;  // isolated or dead end: the walk stops
            cur = nb[uniform_below(rng, nb.size())];
            visit(cur);
        }
    }

    if (static_cast<int>(visited.size()) > cfg.node_budget) {
        // uniform random subset of exactly node_budget nodes
        for (int i = 0; i < cfg.node_budget; ++i) {
            std::size_t j = static_cast<std::size_t>(i) +
                            static_cast<std::size_t>(uniform_below(rng, visited.size() - static_cast<std::size_t>(i)));
            std::swap(visited[static_cast<std::size_t>(i)], visited[j]);
        }
        visited.resize(static_cast<std::size_t>(cfg.node_budget));
    }
    std::sort(visited.begin(), visited.end());

    Subgraph sg;
    sg.node_of = visited;
    sg.visit_count.reserve(visited.size());
    for (int v : visited) sg.visit_count.push_back(visits[static_cast<std::size_t>(v)]);
    std::vector<int> local(static_cast<std::size_t>(n), -1);
    for (std::size_t i = 0; i < visited.size(); ++i)
        local[static_cast<std::size_t>(visited[i])] = static_cast<int>(i);
    for (auto [a, b] : graph.edges)
        if (local[static_cast<std::size_t>(a)] >= 0 && local[static_cast<std::size_t>(b)] >= 0)
            sg.edges.push_back({local[static_cast<std::size_t>(a)], local[static_cast<std::size_t>(b)]});
    return sg;
}

// Inverse-inclusion-frequency loss weights from sample_coverage preliminary
// draws: w_v proportional to 1/(count_v + 1), normalized to mean one.
inline Eigen::VectorXd estimate_norms(const ViewGraph& graph, const SamplerConfig& cfg, Rng& rng) {
    cfg.validate();
    const int n = graph.size();
    if (n == 0) throw SamplerError("cannot estimate norms on an empty view");
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(n);
    for (int s = 0; s < cfg.sample_coverage; ++s) {
        Subgraph sg = sample_subgraph(graph, cfg, rng);
        for (int v : sg.node_of) counts[v] += 1.0;
    }
    Eigen::VectorXd w = (counts.array() + 1.0).inverse();
    w *= static_cast<double>(n) / w.sum();
    return w;
}

}  // namespace gsdfuse
