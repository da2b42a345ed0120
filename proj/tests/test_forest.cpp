#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "gsdfuse/forest.hpp"

using namespace gsdfuse;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path);
    out << content;
    return path;
}

std::string read_all(const std::string& path) {
    std::ifstream in(path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("single root line loads as a one-node forest") {
    auto p = write_temp(
        "f1.jsonl",
        R"({"node_id":0,"tree_id":0,"parent_id":null,"token_ids":[1],"label":0,"split":"train"})"
        "\n");
    auto f = load_forest(p);
    REQUIRE(f.num_nodes() == 1);
    REQUIRE(f.adjacency.empty());
    REQUIRE(!f.nodes[0].parent_id.has_value());
}

TEST_CASE("child plus parent gives one edge") {
    auto p = write_temp(
        "f2.jsonl",
        R"({"node_id":0,"tree_id":0,"parent_id":null,"token_ids":[1],"label":0,"split":"train"})"
        "\n"
        R"({"node_id":1,"tree_id":0,"parent_id":0,"token_ids":[2,3],"label":0,"split":"train"})"
        "\n");
    auto f = load_forest(p);
    REQUIRE(f.num_nodes() == 2);
    REQUIRE(f.adjacency.size() == 1);
}

TEST_CASE("dangling parent is an integrity error") {
    auto p = write_temp(
        "f3.jsonl",
        R"({"node_id":1,"tree_id":0,"parent_id":99,"token_ids":[2],"label":0,"split":"train"})"
        "\n");
    REQUIRE_THROWS_AS(load_forest(p), IntegrityError);
}

TEST_CASE("parent cycle is an integrity error") {
    auto p = write_temp(
        "f4.jsonl",
        R"({"node_id":0,"tree_id":0,"parent_id":1,"token_ids":[1],"label":0,"split":"train"})"
        "\n"
        R"({"node_id":1,"tree_id":0,"parent_id":0,"token_ids":[1],"label":0,"split":"train"})"
        "\n");
    REQUIRE_THROWS_AS(load_forest(p), IntegrityError);
}

TEST_CASE("malformed line reports its line number") {
    auto p = write_temp(
        "f5.jsonl",
        R"({"node_id":0,"tree_id":0,"parent_id":null,"token_ids":[1],"label":0,"split":"train"})"
        "\nnot json\n");
    try {
        load_forest(p);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        REQUIRE(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("cross-tree parent is rejected") {
    auto p = write_temp(
        "f6.jsonl",
        R"({"node_id":0,"tree_id":0,"parent_id":null,"token_ids":[1],"label":0,"split":"train"})"
        "\n"
        R"({"node_id":1,"tree_id":1,"parent_id":0,"token_ids":[1],"label":0,"split":"train"})"
        "\n");
    REQUIRE_THROWS_AS(load_forest(p), IntegrityError);
}

TEST_CASE("save then load reproduces a byte-identical canonical file") {
    DialogueForest f;
    for (int i = 0; i < 6; ++i) {
        MessageNode n;
        n.node_id = 5 - i;  // scrambled insertion order
        n.tree_id = (5 - i) / 3;
        if ((5 - i) % 3 != 0) n.parent_id = ((5 - i) / 3) * 3;
        n.token_ids = {i + 1, 2 * i + 1};
        n.label = i % 2;
        n.split = Split::train;
        f.nodes.push_back(n);
    }
    f.vocab_size = 16;
    f.has_splits = true;
    f.finalize();

    auto p1 = (std::filesystem::temp_directory_path() / "round1.jsonl").string();
    save_forest(f, p1);
    auto g = load_forest(p1);
    auto p2 = (std::filesystem::temp_directory_path() / "round2.jsonl").string();
    save_forest(g, p2);
    REQUIRE(read_all(p1) == read_all(p2));
    REQUIRE(!read_all(p1).empty());
    REQUIRE(read_all(p1).back() == '\n');
}

TEST_CASE("edge count is node count minus tree count") {
    DialogueForest f;
    int id = 0;
    for (int t = 0; t < 4; ++t) {
        int root = id;
        for (int k = 0; k < 1 + t; ++k) {
            MessageNode n;
            n.node_id = id++;
            n.tree_id = t;
            if (k > 0) n.parent_id = root + (k - 1);
            n.token_ids = {1};
            f.nodes.push_back(n);
        }
    }
    f.vocab_size = 4;
    f.finalize();
    REQUIRE(static_cast<int>(f.adjacency.size()) == f.num_nodes() - f.num_trees());
}

namespace {

DialogueForest chain_forest(int n) {
    DialogueForest f;
    for (int i = 0; i < n; ++i) {
        MessageNode node;
        node.node_id = i;
        node.tree_id = i / 4;
        if (i % 4 != 0) node.parent_id = i - 1;
        node.token_ids = {1};
        f.nodes.push_back(node);
    }
    f.vocab_size = 4;
    f.finalize();
    return f;
}

}  // namespace

TEST_CASE("split counts follow the rounding rule") {
    auto f = split_forest(chain_forest(8), {0.75, 0.125, 0.125}, 7);
    std::array<int, 3> counts{};
    for (const auto& n : f.nodes) counts[static_cast<int>(n.split)]++;
    REQUIRE(counts == std::array<int, 3>{6, 1, 1});

    auto big = split_forest(chain_forest(1000), {0.75, 0.125, 0.125}, 42);
    int train = 0;
    for (const auto& n : big.nodes) train += n.split == Split::train;
    REQUIRE(train >= 749);
    REQUIRE(train <= 751);
    // largest-remainder targets are exact here: 0.75*1000 has no remainder
    REQUIRE(train == 750);
}

TEST_CASE("split assignment is deterministic in the seed") {
    auto a = split_forest(chain_forest(40), {0.75, 0.125, 0.125}, 3);
    auto b = split_forest(chain_forest(40), {0.75, 0.125, 0.125}, 3);
    auto c = split_forest(chain_forest(40), {0.75, 0.125, 0.125}, 4);
    bool same = true, differs = false;
    for (int i = 0; i < 40; ++i) {
        same = same && a.nodes[i].split == b.nodes[i].split;
        differs = differs || a.nodes[i].split != c.nodes[i].split;
    }
    REQUIRE(same);
    REQUIRE(differs);
}

TEST_CASE("bad ratios are a config error") {
    REQUIRE_THROWS_AS(split_forest(chain_forest(8), {0.5, 0.2, 0.2}, 1), ConfigError);
}

TEST_CASE("train view drops cross-split edges, eval views keep them") {
    DialogueForest f;
    MessageNode root;
    root.node_id = 0;
    root.tree_id = 0;
    root.token_ids = {1};
    root.split = Split::train;
    MessageNode child;
    child.node_id = 1;
    child.tree_id = 0;
    child.parent_id = 0;
    child.token_ids = {2};
    child.split = Split::test;
    f.nodes = {root, child};
    f.vocab_size = 4;
    f.has_splits = true;
    f.finalize();

    auto tv = view(f, Split::train);
    REQUIRE(tv.visible_nodes.size() == 1);
    REQUIRE(tv.visible_edges.empty());

    auto ev = view(f, Split::test);
    REQUIRE(ev.visible_nodes.size() == 2);
    REQUIRE(ev.visible_edges.size() == 1);
    REQUIRE(ev.scored_nodes == std::vector<int>{1});

    REQUIRE_THROWS_AS(view(f, "nope"), ConfigError);
}

TEST_CASE("all-train forest: train view is the whole forest") {
    auto f = chain_forest(12);
    f.has_splits = true;  // default split is train for every node
    auto tv = view(f, Split::train);
    REQUIRE(static_cast<int>(tv.visible_nodes.size()) == f.num_nodes());
    REQUIRE(tv.visible_edges.size() == f.adjacency.size());
}

TEST_CASE("train view never leaks val or test nodes") {
    auto f = split_forest(chain_forest(200), {0.6, 0.2, 0.2}, 11);
    auto tv = view(f, Split::train);
    std::set<int> vis(tv.visible_nodes.begin(), tv.visible_nodes.end());
    for (int i : tv.visible_nodes) REQUIRE(f.nodes[i].split == Split::train);
    for (auto [a, b] : tv.visible_edges) {
        REQUIRE(vis.count(a) == 1);
        REQUIRE(vis.count(b) == 1);
    }
}

TEST_CASE("per-tree splitting keeps every tree inside one split") {
    auto f = split_forest(chain_forest(200), {0.6, 0.2, 0.2}, 13, SplitMode::per_tree);
    std::map<std::int64_t, Split> of_tree;
    for (const auto& n : f.nodes) {
        auto it = of_tree.find(n.tree_id);
        if (it == of_tree.end())
            of_tree[n.tree_id] = n.split;
        else
            REQUIRE(it->second == n.split);
    }
    // no reply edge can ever cross a split boundary
    auto tv = view(f, Split::train);
    int train_nodes = 0;
    for (const auto& n : f.nodes) train_nodes += n.split == Split::train;
    REQUIRE(static_cast<int>(tv.visible_nodes.size()) == train_nodes);
    REQUIRE(train_nodes > 60);   // ratios hold loosely
    REQUIRE(train_nodes < 180);
}
