#pragma once

// Run configuration: one JSON document covering dataset synthesis (or a path
// to an existing dataset), model dimensions, the sampler, the optimizer,
// and every objective knob. Canonical dumps (sorted keys) feed the config
// fingerprint that ties checkpoints, reports, and datasets together.

#include <array>
#include <string>

#include <nlohmann/json.hpp>

#include "gsdfuse/common.hpp"
#include "gsdfuse/losses.hpp"
#include "gsdfuse/model.hpp"
#include "gsdfuse/sampler.hpp"
#include "gsdfuse/sandbox.hpp"
#include "gsdfuse/trainer.hpp"

namespace gsdfuse {

struct DataConfig {
    std::string path;  // empty: synthesize per the spec below
    SandboxSpec synth;
    int vocab_size = 256;
    std::uint64_t lm_seed = 7;
    double lm_alpha = 0.3;
    double lm_eos_prob = 0.08;
    std::array<double, 3> split_ratios{0.75, 0.125, 0.125};
    std::uint64_t split_seed = 42;
    SplitMode split_mode = SplitMode::per_node;
};

struct RunConfig {
    DataConfig data;
    ModelConfig model;
    SamplerConfig sampler;
    TrainConfig train;
    SmoteConfig smote;
    TripletConfig triplet;
};

inline const char* mining_name(Mining m) {
    switch (m) {
        case Mining::semi_hard: return "semi_hard";
        case Mining::hard: return "hard";
        case Mining::none: return "none";
    }
    return "?";
}

inline Mining parse_mining(const std::string& s) {
    if (s == "semi_hard") return Mining::semi_hard;
    if (s == "hard") return Mining::hard;
    if (s == "none") return Mining::none;
    throw ConfigError("unknown mining strategy: " + s);
}

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["data"] = {{"path", c.data.path},
                 {"codec", codec_name(c.data.synth.codec)},
                 {"hc_pool", c.data.synth.hc_tree_size},
                 {"srs", c.data.synth.srs},
                 {"trees", c.data.synth.n_trees},
                 {"mean_tree_size", c.data.synth.mean_tree_size},
                 {"synth_max_len", c.data.synth.max_len},
                 {"synth_seed", c.data.synth.seed},
                 {"vocab_size", c.data.vocab_size},
                 {"lm_seed", c.data.lm_seed},
                 {"lm_alpha", c.data.lm_alpha},
                 {"lm_eos_prob", c.data.lm_eos_prob},
                 {"split_ratios", c.data.split_ratios},
                 {"split_seed", c.data.split_seed},
                 {"split_mode", c.data.split_mode == SplitMode::per_tree ? "per_tree" : "per_node"}};
    j["model"] = {{"embed_dim", c.model.embed_dim},
                  {"channels", c.model.channels},
                  {"kernels", c.model.kernels},
                  {"max_len", c.model.max_len},
                  {"gnn_dim", c.model.gnn_dim},
                  {"gnn_heads", c.model.gnn_heads},
                  {"gnn_layers", c.model.gnn_layers},
                  {"gin_dim", c.model.gin_dim},
                  {"gin_layers", c.model.gin_layers},
                  {"fuse_dim", c.model.fuse_dim},
                  {"fuse_expansion", c.model.fuse_expansion},
                  {"dropout", c.model.dropout},
                  {"gin_dropout", c.model.gin_dropout},
                  {"use_gau", c.model.use_gau},
                  {"use_gin", c.model.use_gin}};
    j["sampler"] = {{"strategy", "random_walk"},
                    {"roots_per_sample", c.sampler.roots_per_sample},
                    {"walk_depth", c.sampler.walk_depth},
                    {"node_budget", c.sampler.node_budget},
                    {"sample_coverage", c.sampler.sample_coverage}};
    j["train"] = {{"optimizer", "adam"},
                  {"lr", c.train.lr},
                  {"weight_decay", c.train.weight_decay},
                  {"max_epochs", c.train.max_epochs},
                  {"patience", c.train.patience},
                  {"seed", c.train.seed},
                  {"n_runs", c.train.n_runs},
                  {"use_smote", c.train.use_smote},
                  {"use_triplet", c.train.use_triplet},
                  {"triplet_max_pairs", c.train.triplet_max_pairs}};
    j["smote"] = {{"k_neighbors", c.smote.k_neighbors},
                  {"n_synth_per_batch", c.smote.n_synth_per_batch},
                  {"weight", c.smote.weight},
                  {"seed", c.smote.seed}};
    j["triplet"] = {{"margin", c.triplet.margin},
                    {"p", c.triplet.p},
                    {"weight", c.triplet.weight},
                    {"mining", mining_name(c.triplet.mining)}};
    return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    auto get = [](const nlohmann::json& obj, const char* key, auto fallback) {
        using T = decltype(fallback);
        return obj.contains(key) ? obj.at(key).get<T>() : fallback;
    };
    if (j.contains("data")) {
        const auto& d = j.at("data");
        c.data.path = get(d, "path", std::string{});
        c.data.synth.codec = parse_codec(get(d, "codec", std::string{"hc"}));
        c.data.synth.hc_tree_size = get(d, "hc_pool", 8);
        c.data.synth.srs = get(d, "srs", 0.1);
        c.data.synth.n_trees = get(d, "trees", 100);
        c.data.synth.mean_tree_size = get(d, "mean_tree_size", 8);
        c.data.synth.max_len = get(d, "synth_max_len", 32);
        c.data.synth.seed = get(d, "synth_seed", std::uint64_t{42});
        c.data.vocab_size = get(d, "vocab_size", 256);
        c.data.lm_seed = get(d, "lm_seed", std::uint64_t{7});
        c.data.lm_alpha = get(d, "lm_alpha", 0.3);
        c.data.lm_eos_prob = get(d, "lm_eos_prob", 0.08);
        c.data.split_ratios = get(d, "split_ratios", std::array<double, 3>{0.75, 0.125, 0.125});
        c.data.split_seed = get(d, "split_seed", std::uint64_t{42});
        std::string mode = get(d, "split_mode", std::string{"per_node"});
        if (mode != "per_node" && mode != "per_tree")
            throw ConfigError("split_mode must be per_node or per_tree");
        c.data.split_mode = mode == "per_tree" ? SplitMode::per_tree : SplitMode::per_node;
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        c.model.embed_dim = get(m, "embed_dim", c.model.embed_dim);
        c.model.channels = get(m, "channels", c.model.channels);
        c.model.kernels = get(m, "kernels", c.model.kernels);
        c.model.max_len = get(m, "max_len", c.model.max_len);
        c.model.gnn_dim = get(m, "gnn_dim", c.model.gnn_dim);
        c.model.gnn_heads = get(m, "gnn_heads", c.model.gnn_heads);
        c.model.gnn_layers = get(m, "gnn_layers", c.model.gnn_layers);
        c.model.gin_dim = get(m, "gin_dim", c.model.gin_dim);
        c.model.gin_layers = get(m, "gin_layers", c.model.gin_layers);
        c.model.fuse_dim = get(m, "fuse_dim", c.model.fuse_dim);
        c.model.fuse_expansion = get(m, "fuse_expansion", c.model.fuse_expansion);
        c.model.dropout = get(m, "dropout", c.model.dropout);
        c.model.gin_dropout = get(m, "gin_dropout", c.model.gin_dropout);
        c.model.use_gau = get(m, "use_gau", true);
        c.model.use_gin = get(m, "use_gin", true);
    }
    if (j.contains("sampler")) {
        const auto& s = j.at("sampler");
        c.sampler.roots_per_sample = get(s, "roots_per_sample", c.sampler.roots_per_sample);
        c.sampler.walk_depth = get(s, "walk_depth", c.sampler.walk_depth);
        c.sampler.node_budget = get(s, "node_budget", c.sampler.node_budget);
        c.sampler.sample_coverage = get(s, "sample_coverage", c.sampler.sample_coverage);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        c.train.lr = get(t, "lr", c.train.lr);
        c.train.weight_decay = get(t, "weight_decay", c.train.weight_decay);
        c.train.max_epochs = get(t, "max_epochs", c.train.max_epochs);
        c.train.patience = get(t, "patience", c.train.patience);
        c.train.seed = get(t, "seed", c.train.seed);
        c.train.n_runs = get(t, "n_runs", c.train.n_runs);
        c.train.use_smote = get(t, "use_smote", true);
        c.train.use_triplet = get(t, "use_triplet", true);
        c.train.triplet_max_pairs = get(t, "triplet_max_pairs", c.train.triplet_max_pairs);
    }
    if (j.contains("smote")) {
        const auto& s = j.at("smote");
        c.smote.k_neighbors = get(s, "k_neighbors", c.smote.k_neighbors);
        c.smote.n_synth_per_batch = get(s, "n_synth_per_batch", c.smote.n_synth_per_batch);
        c.smote.weight = get(s, "weight", c.smote.weight);
        c.smote.seed = get(s, "seed", c.smote.seed);
    }
    if (j.contains("triplet")) {
        const auto& t = j.at("triplet");
        c.triplet.margin = get(t, "margin", c.triplet.margin);
        c.triplet.p = get(t, "p", c.triplet.p);
        c.triplet.weight = get(t, "weight", c.triplet.weight);
        c.triplet.mining = parse_mining(get(t, "mining", std::string{"semi_hard"}));
    }
    return c;
}

// Canonical form: nlohmann::json orders object keys, so dump() is stable.
// The dataset path is identity-irrelevant (the metadata sidecar is the
// identity) and is blanked before hashing.
inline std::string canonical_config(const RunConfig& c) {
    nlohmann::json j = to_json(c);
    j["data"]["path"] = "";
    return j.dump();
}

// Full-config fingerprint: guards checkpoints against evaluation under a
// different configuration or dataset.
inline std::uint64_t config_fingerprint(const RunConfig& c, const ForestMeta& meta) {
    return fnv1a64(canonical_config(c) + "|" + meta.canonical());
}

// Dataset-only fingerprint: shared by every ablation run on one dataset, so
// sweep rows group and duplicates are detectable.
inline std::uint64_t dataset_fingerprint(const RunConfig& c, const ForestMeta& meta) {
    nlohmann::json d = to_json(c)["data"];
    d["path"] = "";
    return fnv1a64(d.dump() + "|" + meta.canonical());
}

// Materialize the dataset: load from disk when a path is given, otherwise
// synthesize and split deterministically from the config.
inline DialogueForest materialize_dataset(const DataConfig& d) {
    if (!d.path.empty()) return load_forest(d.path);
    TokenModel lm = TokenModel::random_bigram(d.vocab_size, d.lm_seed, d.lm_alpha, d.lm_eos_prob);
    DialogueForest f = synthesize_sandbox(d.synth, lm);
    return split_forest(std::move(f), d.split_ratios, d.split_seed, d.split_mode);
}

}  // namespace gsdfuse
