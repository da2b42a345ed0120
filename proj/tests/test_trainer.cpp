#include <catch_amalgamated.hpp>

#include <filesystem>

#include "gsdfuse/sandbox.hpp"
#include "gsdfuse/trainer.hpp"

using namespace gsdfuse;

namespace {

// Tiny model so the loop itself is what gets tested.
ModelConfig tiny_model(int vocab) {
    ModelConfig cfg;
    cfg.vocab_size = vocab;
    cfg.embed_dim = 8;
    cfg.channels = 6;
    cfg.kernels = {2, 3};
    cfg.max_len = 12;
    cfg.gnn_dim = 8;
    cfg.gnn_heads = 2;
    cfg.gin_dim = 8;
    cfg.fuse_dim = 8;
    return cfg;
}

SamplerConfig tiny_sampler() {
    SamplerConfig cfg;
    cfg.roots_per_sample = 64;
    cfg.node_budget = 128;
    cfg.sample_coverage = 10;
    return cfg;
}

// Forest whose stego label is decided by the presence of one marker token:
// linearly separable from the token statistics alone.
DialogueForest separable_forest(int n_trees, std::uint64_t seed) {
    auto model = TokenModel::random_bigram(16, seed, 0.4, 0.10);
    SandboxSpec spec;
    spec.n_trees = n_trees;
    spec.mean_tree_size = 4;
    spec.max_len = 10;
    spec.seed = seed;
    spec.srs = 0.0;
    DialogueForest f = synthesize_sandbox(spec, model);
    Rng rng(derive_seed(seed, 77));
    for (auto& node : f.nodes) {
        // tokens are drawn from [0,16); the marker token is 7
        for (auto& t : node.token_ids)
            if (t == 7) t = 8;
        if (uniform01(rng) < 0.3) {
            node.label = 1;
            node.token_ids[uniform_below(rng, node.token_ids.size())] = 7;
        }
    }
    return split_forest(std::move(f), {0.6, 0.2, 0.2}, seed);
}

}  // namespace

TEST_CASE("metric definitions match the stated conventions") {
    auto m = metrics_from_counts(2, 1, 1, 10);
    REQUIRE(m.precision == Catch::Approx(2.0 / 3.0).margin(1e-15));
    REQUIRE(m.recall == Catch::Approx(2.0 / 3.0).margin(1e-15));
    REQUIRE(m.f1 == Catch::Approx(2.0 / 3.0).margin(1e-15));
    REQUIRE(metrics_from_counts(0, 0, 5, 10).f1 == 0.0);  // no positive predictions
    REQUIRE(metrics_from_counts(5, 0, 0, 10).f1 == 1.0);  // perfect detector
}

TEST_CASE("zero learning rate leaves parameters at their initialization") {
    DialogueForest forest = separable_forest(40, 5);
    GsdFuseModel model(tiny_model(forest.vocab_size));
    TrainConfig tc;
    tc.lr = 0.0;
    tc.max_epochs = 3;
    tc.patience = 2;
    tc.seed = 9;
    train(model, forest, tc, tiny_sampler(), SmoteConfig{}, TripletConfig{});

    GsdFuseModel fresh(tiny_model(forest.vocab_size));
    fresh.init(tc.seed);
    auto pa = model.params();
    auto pb = fresh.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        REQUIRE((pa[i]->v - pb[i]->v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training stops after patience epochs without improvement") {
    DialogueForest forest = separable_forest(40, 6);
    GsdFuseModel model(tiny_model(forest.vocab_size));
    TrainConfig tc;
    tc.lr = 0.0;  // validation F1 is frozen, so epoch 1 stays best
    tc.max_epochs = 50;
    tc.patience = 3;
    tc.seed = 4;
    auto out = train(model, forest, tc, tiny_sampler(), SmoteConfig{}, TripletConfig{});
    REQUIRE(out.epochs_run == 1 + tc.patience);
    // best epoch always carries the maximum validation F1 seen; ties keep
    // the most-trained parameters
    double best = -1.0;
    for (const auto& e : out.log) best = std::max(best, e.val_f1);
    REQUIRE(out.best.val_f1 == best);
    REQUIRE(out.best.epoch == out.epochs_run);
}

TEST_CASE("a separable marker token is learned quickly") {
    DialogueForest forest = separable_forest(120, 7);
    ModelConfig mc = tiny_model(forest.vocab_size);
    mc.channels = 12;
    mc.gnn_dim = 16;
    mc.gin_dim = 16;
    mc.fuse_dim = 16;
    GsdFuseModel model(mc);
    TrainConfig tc;
    tc.lr = 0.01;
    tc.max_epochs = 50;
    tc.patience = 49;  // the marker must be found inside the epoch budget
    tc.seed = 42;
    auto out = train(model, forest, tc, tiny_sampler(), SmoteConfig{}, TripletConfig{});
    Metrics train_m = evaluate(model, forest, Split::train);
    INFO("epochs " << out.epochs_run << " train F1 " << train_m.f1);
    REQUIRE(train_m.f1 >= 0.99);
}

TEST_CASE("identical seeds reproduce losses and parameters bit for bit") {
    DialogueForest forest = separable_forest(60, 8);
    TrainConfig tc;
    tc.lr = 0.01;
    tc.max_epochs = 3;
    tc.patience = 2;
    tc.seed = 123;

    GsdFuseModel a(tiny_model(forest.vocab_size));
    auto ra = train(a, forest, tc, tiny_sampler(), SmoteConfig{}, TripletConfig{});
    GsdFuseModel b(tiny_model(forest.vocab_size));
    auto rb = train(b, forest, tc, tiny_sampler(), SmoteConfig{}, TripletConfig{});

    REQUIRE(ra.log[0].l_total == rb.log[0].l_total);
    REQUIRE(ra.log[0].l_ce == rb.log[0].l_ce);
    auto pa = a.params();
    auto pb = b.params();
    for (std::size_t i = 0; i < pa.size(); ++i)
        REQUIRE((pa[i]->v - pb[i]->v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("checkpoints round-trip and reject mismatched manifests") {
    DialogueForest forest = separable_forest(40, 9);
    GsdFuseModel model(tiny_model(forest.vocab_size));
    model.init(3);
    CheckpointInfo info;
    info.fingerprint = 0xabcdef;
    info.epoch = 7;
    info.val_f1 = 0.5;
    info.config_text = "cfg";
    auto path = (std::filesystem::temp_directory_path() / "ckpt.bin").string();
    std::vector<const Param*> cps;
    for (Param* p : model.params()) cps.push_back(p);
    save_checkpoint(path, cps, info);

    GsdFuseModel other(tiny_model(forest.vocab_size));
    other.init(99);
    auto loaded = load_checkpoint(path, other.params());
    REQUIRE(loaded.fingerprint == 0xabcdef);
    REQUIRE(loaded.epoch == 7);
    auto pa = model.params();
    auto pb = other.params();
    for (std::size_t i = 0; i < pa.size(); ++i)
        REQUIRE((pa[i]->v - pb[i]->v).cwiseAbs().maxCoeff() == 0.0);

    // a different architecture cannot absorb the archive
    ModelConfig small = tiny_model(forest.vocab_size);
    small.fuse_dim = 4;
    GsdFuseModel wrong(small);
    wrong.init(1);
    REQUIRE_THROWS_AS(load_checkpoint(path, wrong.params()), ParseError);
}

TEST_CASE("run log lands on disk with the documented columns") {
    std::vector<EpochLog> log(2);
    log[0].epoch = 1;
    log[0].l_total = 1.5;
    log[1].epoch = 2;
    log[1].val_f1 = 0.25;
    auto path = (std::filesystem::temp_directory_path() / "runlog.csv").string();
    write_run_log(path, log);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    REQUIRE(header == "epoch,L_CE,L_SMOTE,L_triplet,L_total,val_P,val_R,val_F1,seconds");
    int rows = 0;
    for (std::string line; std::getline(in, line);) rows += !line.empty();
    REQUIRE(rows == 2);
}
