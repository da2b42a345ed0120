#pragma once

// Optimization loop: sampled-subgraph epochs with inverse-frequency loss
// normalization, the composite objective (cross-entropy + oversampled
// cross-entropy + triplet), Adam updates, full-graph validation after every
// epoch, and patience-based early stopping on validation F1 (stego = the
// positive class).

#include <chrono>
#include <cmath>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gsdfuse/forest.hpp"
#include "gsdfuse/losses.hpp"
#include "gsdfuse/model.hpp"
#include "gsdfuse/nn_core.hpp"
#include "gsdfuse/sampler.hpp"

namespace gsdfuse {

struct TrainConfig {
    double lr = 0.01;
    double weight_decay = 0.0;
    int max_epochs = 200;
    int patience = 20;
    std::uint64_t seed = 42;
    int n_runs = 3;                       // seeds per reported experiment
    bool use_smote = true;
    bool use_triplet = true;
    std::size_t triplet_max_pairs = 2048;  // pair cap when mining inside training batches

    void validate() const {
        if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
        if (patience < 1 || patience >= max_epochs)
            throw ConfigError("patience must lie in [1, max_epochs)");
        if (lr < 0.0) throw ConfigError("learning rate must be >= 0");
    }
};

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Metrics metrics_from_counts(long tp, long fp, long fn, long tn) {
    Metrics m;
    m.tp = tp;
    m.fp = fp;
    m.fn = fn;
    m.tn = tn;
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

struct EpochLog {
    int epoch = 0;
    double l_ce = 0.0, l_smote = 0.0, l_triplet = 0.0, l_total = 0.0;
    double val_p = 0.0, val_r = 0.0, val_f1 = 0.0;
    double seconds = 0.0;
};

struct TrainOutput {
    CheckpointInfo best;
    std::vector<EpochLog> log;
    int epochs_run = 0;
    int smote_skipped_batches = 0;
    bool minority_swapped = false;  // cover turned out rarer than stego
};

namespace detail {

struct GraphBatch {
    std::vector<std::vector<int>> tokens;
    std::vector<int> labels;
    std::vector<std::pair<int, int>> edges;
};

inline GraphBatch batch_from_view(const DialogueForest& forest, const SplitView& v) {
    GraphBatch b;
    std::unordered_map<int, int> local;
    local.reserve(v.visible_nodes.size());
    for (std::size_t i = 0; i < v.visible_nodes.size(); ++i) {
        const MessageNode& n = forest.nodes[static_cast<std::size_t>(v.visible_nodes[i])];
        b.tokens.push_back(n.token_ids);
        b.labels.push_back(n.label);
        local[v.visible_nodes[i]] = static_cast<int>(i);
    }
    for (auto [a, bb] : v.visible_edges) b.edges.push_back({local.at(a), local.at(bb)});
    return b;
}

}  // namespace detail

// Full-graph inference; metrics cover only the nodes of the requested split.
inline Metrics evaluate(GsdFuseModel& model, const DialogueForest& forest, Split split) {
    SplitView v = view(forest, split);
    detail::GraphBatch batch = detail::batch_from_view(forest, v);
    Rng rng(0);  // inference only; no stochastic pieces active
    ModelActivations acts = model.forward(batch.tokens, batch.edges, false, false, rng);
    std::unordered_map<int, int> local;
    for (std::size_t i = 0; i < v.visible_nodes.size(); ++i)
        local[v.visible_nodes[i]] = static_cast<int>(i);
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (int forest_idx : v.scored_nodes) {
        int i = local.at(forest_idx);
        int pred = ClassifierHead::predict(acts.logits(i, 0), acts.logits(i, 1));
        int y = forest.nodes[static_cast<std::size_t>(forest_idx)].label;
        tp += pred == 1 && y == 1;
        fp += pred == 1 && y == 0;
        fn += pred == 0 && y == 1;
        tn += pred == 0 && y == 0;
    }
    return metrics_from_counts(tp, fp, fn, tn);
}

inline TrainOutput train(GsdFuseModel& model, const DialogueForest& forest,
                         const TrainConfig& tcfg, const SamplerConfig& scfg,
                         const SmoteConfig& smote_cfg, const TripletConfig& trip_cfg,
                         std::uint64_t fingerprint = 0, const std::string& config_text = {}) {
    tcfg.validate();
    scfg.validate();
    TrainOutput out;

    SplitView train_view = view(forest, Split::train);
    if (train_view.visible_nodes.empty()) throw SamplerError("empty training view");
    ViewGraph graph = ViewGraph::build(train_view);
    const int n_train = graph.size();

    model.init(tcfg.seed);
    Adam adam(tcfg.lr, 0.9, 0.999, 1e-8, tcfg.weight_decay);
    std::vector<Param*> params = model.params();

    Rng norm_rng(derive_seed(tcfg.seed, 0x4e4f524dULL));
    Eigen::VectorXd norm_w = estimate_norms(graph, scfg, norm_rng);
    Rng sample_rng(derive_seed(tcfg.seed, 0x53414d50ULL));
    Rng dropout_rng(derive_seed(tcfg.seed, 0x44524f50ULL));
    Rng smote_rng(derive_seed(smote_cfg.seed, 0x534d4f54ULL));

    const int batches_per_epoch =
        (n_train + scfg.node_budget - 1) / scfg.node_budget;

    double best_f1 = -1.0;
    int best_epoch = 0, since_best = 0;
    std::vector<Eigen::MatrixXd> best_params;

    TripletConfig trip_train = trip_cfg;
    trip_train.max_pairs = tcfg.triplet_max_pairs;

    for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        double ep_ce = 0.0, ep_smote = 0.0, ep_trip = 0.0, ep_total = 0.0;
        for (int b = 0; b < batches_per_epoch; ++b) {
            Subgraph sg = sample_subgraph(graph, scfg, sample_rng);
            detail::GraphBatch batch;
            Eigen::VectorXd w(static_cast<Eigen::Index>(sg.node_of.size()));
            for (std::size_t i = 0; i < sg.node_of.size(); ++i) {
                int forest_idx = train_view.visible_nodes[static_cast<std::size_t>(sg.node_of[i])];
                const MessageNode& n = forest.nodes[static_cast<std::size_t>(forest_idx)];
                batch.tokens.push_back(n.token_ids);
                batch.labels.push_back(n.label);
                w[static_cast<Eigen::Index>(i)] = norm_w[sg.node_of[i]];
            }

            model.zero_grads();
            ModelActivations acts =
                model.forward(batch.tokens, sg.edges, true, true, dropout_rng);
            CeResult ce = cross_entropy(acts.logits, batch.labels, w);

            TripletLossResult trip;
            trip.d_emb = Eigen::MatrixXd();
            if (tcfg.use_triplet) {
                auto triples = mine_triplets(acts.f, batch.labels, trip_train);
                trip = triplet_loss(triples, acts.f, trip_cfg);
            }

            // encoder/fusion/head gradients; the head cache still holds the
            // real batch, so this must precede the synthetic head pass
            model.backward(ce.d_logits,
                           tcfg.use_triplet && trip.d_emb.size() > 0
                               ? Eigen::MatrixXd(trip_cfg.weight * trip.d_emb)
                               : Eigen::MatrixXd());

            double smote_loss = 0.0;
            if (tcfg.use_smote) {
                // the minority class is expected to be stego; swap if the
                // batch says otherwise
                long n_stego = 0;
                for (int y : batch.labels) n_stego += y;
                int minority_label = 1;
                if (2 * n_stego > static_cast<long>(batch.labels.size())) {
                    minority_label = 0;
                    if (!out.minority_swapped)
                        std::cerr << "warning: stego is the majority class; oversampling covers\n";
                    out.minority_swapped = true;
                }
                std::vector<int> min_rows;
                for (std::size_t i = 0; i < batch.labels.size(); ++i)
                    if (batch.labels[i] == minority_label) min_rows.push_back(static_cast<int>(i));
                if (min_rows.size() >= 2) {
                    Eigen::MatrixXd minority(static_cast<Eigen::Index>(min_rows.size()),
                                             acts.f.cols());
                    for (std::size_t i = 0; i < min_rows.size(); ++i)
                        minority.row(static_cast<Eigen::Index>(i)) = acts.f.row(min_rows[i]);
                    Eigen::MatrixXd synth = smote_synthesize(minority, smote_cfg, smote_rng);
                    std::vector<int> synth_labels(static_cast<std::size_t>(synth.rows()),
                                                  minority_label);
                    Eigen::MatrixXd synth_logits = model.head_forward(synth, true);
                    CeResult ce_syn = cross_entropy(synth_logits, synth_labels);
                    model.head_backward(Eigen::MatrixXd(smote_cfg.weight * ce_syn.d_logits));
                    smote_loss = ce_syn.loss;
                } else {
                    ++out.smote_skipped_batches;
                }
            }

            CompositeWeights cw{smote_cfg.weight, trip_cfg.weight, tcfg.use_smote,
                                tcfg.use_triplet};
            double total = composite_loss(ce.loss, smote_loss, trip.loss, cw);
            if (!std::isfinite(total)) {
                std::ostringstream os;
                os << "non-finite loss at epoch " << epoch << " batch " << b
                   << ": ce=" << ce.loss << " smote=" << smote_loss
                   << " triplet=" << trip.loss << " nodes=" << batch.labels.size();
                throw NumericError(os.str());
            }
            adam.step(params);

            ep_ce += ce.loss;
            ep_smote += smote_loss;
            ep_trip += trip.loss;
            ep_total += total;
        }

        Metrics val = evaluate(model, forest, Split::val);
        auto t1 = std::chrono::steady_clock::now();

        EpochLog log;
        log.epoch = epoch;
        log.l_ce = ep_ce / batches_per_epoch;
        log.l_smote = ep_smote / batches_per_epoch;
        log.l_triplet = ep_trip / batches_per_epoch;
        log.l_total = ep_total / batches_per_epoch;
        log.val_p = val.precision;
        log.val_r = val.recall;
        log.val_f1 = val.f1;
        log.seconds = std::chrono::duration<double>(t1 - t0).count();
        out.log.push_back(log);
        out.epochs_run = epoch;

        // patience counts strict improvements; among ties the latest epoch's
        // parameters are kept (more optimization at equal validation score)
        if (val.f1 >= best_f1) {
            since_best = val.f1 > best_f1 ? 0 : since_best + 1;
            best_f1 = val.f1;
            best_epoch = epoch;
            best_params.clear();
            for (Param* p : params) best_params.push_back(p->v);
        } else {
            ++since_best;
        }
        if (since_best >= tcfg.patience) break;
    }

    for (std::size_t i = 0; i < params.size(); ++i) params[i]->v = best_params[i];
    out.best.fingerprint = fingerprint;
    out.best.epoch = best_epoch;
    out.best.val_f1 = best_f1;
    out.best.config_text = config_text;
    return out;
}

inline void write_run_log(const std::string& path, const std::vector<EpochLog>& log) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write run log " + path);
    out << "epoch,L_CE,L_SMOTE,L_triplet,L_total,val_P,val_R,val_F1,seconds\n";
    for (const EpochLog& e : log)
        out << e.epoch << ',' << e.l_ce << ',' << e.l_smote << ',' << e.l_triplet << ','
            << e.l_total << ',' << e.val_p << ',' << e.val_r << ',' << e.val_f1 << ','
            << e.seconds << "\n";
}

}  // namespace gsdfuse
