#pragma once

// Dialogue forests: reply trees whose nodes are token-id messages, each
// labelled cover (0) or stego (1) and assigned to a train/val/test split.
// On disk a forest is one JSONL file (one node per line) plus an optional
// ".meta.json" sidecar with generator metadata.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "gsdfuse/common.hpp"

namespace gsdfuse {

enum class Split { train = 0, val = 1, test = 2 };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ConfigError("unknown split name: " + s);
}

struct MessageNode {
    std::int64_t node_id = 0;
    std::int64_t tree_id = 0;
    std::optional<std::int64_t> parent_id;  // nullopt <=> root
    std::vector<int> token_ids;
    int label = 0;  // 0 cover, 1 stego
    Split split = Split::train;
};

// Metadata sidecar written next to the JSONL file by the synthesizer.
struct ForestMeta {
    std::string codec;
    double srs = 0.0;
    double bpw_realized = 0.0;
    std::uint64_t seed = 0;
    int vocab_size = 0;

    nlohmann::json to_json() const {
        return {{"codec", codec}, {"srs", srs}, {"bpw_realized", bpw_realized},
                {"seed", seed},   {"vocab_size", vocab_size}};
    }
    static ForestMeta from_json(const nlohmann::json& j) {
        ForestMeta m;
        m.codec = j.at("codec").get<std::string>();
        m.srs = j.at("srs").get<double>();
        m.bpw_realized = j.at("bpw_realized").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.vocab_size = j.at("vocab_size").get<int>();
        return m;
    }
    std::string canonical() const { return to_json().dump(); }
};

struct DialogueForest {
    std::vector<MessageNode> nodes;                    // sorted by node_id
    std::vector<std::pair<int, int>> adjacency;        // undirected, indices into nodes
    int vocab_size = 0;
    bool has_splits = false;
    std::optional<ForestMeta> meta;

    std::unordered_map<std::int64_t, int> index_of_id;  // node_id -> index

    int num_nodes() const { return static_cast<int>(nodes.size()); }

    int index(std::int64_t node_id) const {
        auto it = index_of_id.find(node_id);
        if (it == index_of_id.end())
            throw IntegrityError("unknown node_id " + std::to_string(node_id));
        return it->second;
    }

    int num_trees() const {
        std::unordered_set<std::int64_t> trees;
        for (const auto& n : nodes) trees.insert(n.tree_id);
        return static_cast<int>(trees.size());
    }

    // Rebuilds the id index and the undirected edge list from parent links,
    // then verifies every structural invariant.
    void finalize() {
        index_of_id.clear();
        std::sort(nodes.begin(), nodes.end(),
                  [](const MessageNode& a, const MessageNode& b) { return a.node_id < b.node_id; });
        for (int i = 0; i < num_nodes(); ++i) {
            auto [it, fresh] = index_of_id.emplace(nodes[i].node_id, i);
            (void)it;
            if (!fresh)
                throw IntegrityError("duplicate node_id " + std::to_string(nodes[i].node_id));
        }
        adjacency.clear();
        for (int i = 0; i < num_nodes(); ++i) {
            const auto& n = nodes[i];
            if (n.token_ids.empty())
                throw IntegrityError("node " + std::to_string(n.node_id) + " has no tokens");
            if (vocab_size > 0) {
                for (int t : n.token_ids)
                    if (t < 0 || t >= vocab_size)
                        throw IntegrityError("node " + std::to_string(n.node_id) +
                                             " token out of range: " + std::to_string(t));
            }
            if (!n.parent_id) continue;
            auto it = index_of_id.find(*n.parent_id);
            if (it == index_of_id.end())
                throw IntegrityError("node " + std::to_string(n.node_id) +
                                     " references absent parent " + std::to_string(*n.parent_id));
            const auto& p = nodes[it->second];
            if (p.tree_id != n.tree_id)
                throw IntegrityError("node " + std::to_string(n.node_id) +
                                     " parent lies in a different tree");
            adjacency.emplace_back(it->second, i);
        }
        check_acyclic();
    }

    void check_acyclic() const {
        // Follow parent chains; every node must reach a root without revisits.
        for (int i = 0; i < num_nodes(); ++i) {
            std::unordered_set<int> seen;
            int cur = i;
            while (nodes[cur].parent_id) {
                if (!seen.insert(cur).second)
                    throw IntegrityError("cycle through node_id " +
                                         std::to_string(nodes[cur].node_id));
                cur = index_of_id.at(*nodes[cur].parent_id);
            }
        }
    }
};

// A split-restricted window onto a forest. For the train split only
// train-internal edges survive; evaluation views keep the full graph but
// score only their own nodes.
struct SplitView {
    Split split = Split::train;
    std::vector<int> visible_nodes;                // forest indices
    std::vector<std::pair<int, int>> visible_edges;  // forest indices
    std::vector<int> scored_nodes;                 // subset of visible_nodes
};

inline SplitView view(const DialogueForest& forest, Split which) {
    if (!forest.has_splits) throw ConfigError("forest has no split assignment");
    SplitView v;
    v.split = which;
    if (which == Split::train) {
        for (int i = 0; i < forest.num_nodes(); ++i)
            if (forest.nodes[i].split == Split::train) v.visible_nodes.push_back(i);
        for (auto [a, b] : forest.adjacency)
            if (forest.nodes[a].split == Split::train && forest.nodes[b].split == Split::train)
                v.visible_edges.emplace_back(a, b);
        v.scored_nodes = v.visible_nodes;
    } else {
        v.visible_nodes.resize(forest.num_nodes());
        std::iota(v.visible_nodes.begin(), v.visible_nodes.end(), 0);
        v.visible_edges = forest.adjacency;
        for (int i = 0; i < forest.num_nodes(); ++i)
            if (forest.nodes[i].split == which) v.scored_nodes.push_back(i);
    }
    return v;
}

inline SplitView view(const DialogueForest& forest, const std::string& which) {
    return view(forest, parse_split(which));
}

namespace detail {

inline MessageNode parse_node_line(const std::string& line, int lineno) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
        MessageNode n;
        n.node_id = j.at("node_id").get<std::int64_t>();
        n.tree_id = j.at("tree_id").get<std::int64_t>();
        if (!j.at("parent_id").is_null()) n.parent_id = j.at("parent_id").get<std::int64_t>();
        n.token_ids = j.at("token_ids").get<std::vector<int>>();
        n.label = j.at("label").get<int>();
        if (n.label != 0 && n.label != 1)
            throw ParseError("line " + std::to_string(lineno) + ": label must be 0 or 1");
        n.split = parse_split(j.at("split").get<std::string>());
        return n;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
}

inline std::string node_to_line(const MessageNode& n) {
    nlohmann::json j;
    j["node_id"] = n.node_id;
    j["tree_id"] = n.tree_id;
    if (n.parent_id)
        j["parent_id"] = *n.parent_id;
    else
        j["parent_id"] = nullptr;
    j["token_ids"] = n.token_ids;
    j["label"] = n.label;
    j["split"] = split_name(n.split);
    return j.dump();
}

}  // namespace detail

inline DialogueForest load_forest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    DialogueForest f;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        f.nodes.push_back(detail::parse_node_line(line, lineno));
    }
    std::ifstream meta_in(path + ".meta.json");
    if (meta_in) {
        nlohmann::json j;
        try {
            meta_in >> j;
            f.meta = ForestMeta::from_json(j);
            f.vocab_size = f.meta->vocab_size;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ".meta.json: " + std::string(e.what()));
        }
    } else {
        int max_tok = -1;
        for (const auto& n : f.nodes)
            for (int t : n.token_ids) max_tok = std::max(max_tok, t);
        f.vocab_size = max_tok + 1;
    }
    f.has_splits = !f.nodes.empty();
    f.finalize();
    return f;
}

// Canonical serialization: nodes ascending by node_id, fixed key order,
// newline after every line. load(save(f)) is byte-stable.
inline void save_forest(const DialogueForest& forest, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    for (const auto& n : forest.nodes) out << detail::node_to_line(n) << "\n";
    if (forest.meta) {
        std::ofstream mo(path + ".meta.json");
        mo << forest.meta->to_json().dump(2) << "\n";
    }
}

enum class SplitMode { per_node, per_tree };

// Split assignment. The default assigns nodes independently at uniform
// random with largest-remainder target counts, so every count is within one
// node of ratio*N. per_tree keeps reply trees whole and matches the ratios
// only approximately.
inline DialogueForest split_forest(DialogueForest forest, const std::array<double, 3>& ratios,
                                   std::uint64_t seed, SplitMode mode = SplitMode::per_node) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
    for (double r : ratios)
        if (r <= 0.0) throw ConfigError("split ratios must all be positive");
    const int n = forest.num_nodes();
    if (n < 3) throw ConfigError("need at least 3 nodes to split");
    Rng rng(derive_seed(seed, 0x53504c49ULL));  // "SPLI"

    if (mode == SplitMode::per_tree) {
        std::vector<std::int64_t> trees;
        std::unordered_map<std::int64_t, int> tree_size;
        for (const auto& node : forest.nodes) {
            if (!tree_size.count(node.tree_id)) trees.push_back(node.tree_id);
            tree_size[node.tree_id]++;
        }
        std::sort(trees.begin(), trees.end());
        for (std::size_t i = trees.size(); i > 1; --i)
            std::swap(trees[i - 1], trees[uniform_below(rng, i)]);
        std::array<double, 3> want{ratios[0] * n, ratios[1] * n, ratios[2] * n};
        std::unordered_map<std::int64_t, Split> of_tree;
        for (std::int64_t t : trees) {
            int best = 0;
            for (int s = 1; s < 3; ++s)
                if (want[s] > want[best]) best = s;
            of_tree[t] = static_cast<Split>(best);
            want[best] -= tree_size[t];
        }
        for (auto& node : forest.nodes) node.split = of_tree[node.tree_id];
        forest.has_splits = true;
        return forest;
    }

    std::array<int, 3> counts{};
    std::array<double, 3> frac{};
    int assigned = 0;
    for (int s = 0; s < 3; ++s) {
        double t = ratios[s] * n;
        counts[s] = static_cast<int>(std::floor(t));
        frac[s] = t - counts[s];
        assigned += counts[s];
    }
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return frac[a] != frac[b] ? frac[a] > frac[b] : a < b;
    });
    for (int i = 0; assigned < n; ++i, ++assigned) counts[order[i % 3]]++;

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i)
        std::swap(perm[i], perm[uniform_below(rng, static_cast<std::uint64_t>(i) + 1)]);

    int pos = 0;
    for (int s = 0; s < 3; ++s)
        for (int k = 0; k < counts[s]; ++k) forest.nodes[perm[pos++]].split = static_cast<Split>(s);
    forest.has_splits = true;
    return forest;
}

}  // namespace gsdfuse
