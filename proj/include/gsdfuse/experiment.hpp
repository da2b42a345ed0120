#pragma once

// The experiment driver shared by the train and sweep commands: materialize
// (or load) the dataset, train once per seed, evaluate on the test split,
// persist checkpoints, run logs, the report JSON, and a results row.

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include "gsdfuse/config.hpp"
#include "gsdfuse/report.hpp"

namespace gsdfuse {

inline ForestMeta meta_or_stub(const DialogueForest& forest, const std::string& path) {
    if (forest.meta) return *forest.meta;
    ForestMeta m;
    m.codec = "external:" + path;
    m.vocab_size = forest.vocab_size;
    return m;
}

inline ModelConfig model_config_for(const RunConfig& cfg, int vocab_size) {
    ModelConfig m = cfg.model;
    m.vocab_size = vocab_size;
    return m;
}

// Runs synth (when needed) -> n_runs trainings -> test evaluation, writing
// every artifact under out_dir. Failures mark the report and rethrow after
// persisting it.
inline RunReport run_experiment(const RunConfig& cfg, const std::string& out_dir,
                                bool echo = true) {
    std::filesystem::create_directories(out_dir);
    DialogueForest forest = materialize_dataset(cfg.data);
    if (cfg.data.path.empty()) {
        save_forest(forest, out_dir + "/data.jsonl");
    }
    ForestMeta meta = meta_or_stub(forest, cfg.data.path);

    RunReport report;
    report.meta = meta;
    report.fingerprint = dataset_fingerprint(cfg, meta);
    report.use_gau = cfg.model.use_gau;
    report.use_gin = cfg.model.use_gin;
    report.use_smote = cfg.train.use_smote;
    report.use_triplet = cfg.train.use_triplet;

    const std::uint64_t full_fp = config_fingerprint(cfg, meta);
    const std::string config_text = canonical_config(cfg) + "|" + meta.canonical();

    std::string report_path;
    {
        std::ostringstream os;
        os << out_dir << "/report_" << std::hex << report.fingerprint << "_"
           << report.ablation() << ".json";
        report_path = os.str();
    }

    try {
        for (int run = 0; run < cfg.train.n_runs; ++run) {
            TrainConfig tc = cfg.train;
            tc.seed = cfg.train.seed + static_cast<std::uint64_t>(run);
            GsdFuseModel model(model_config_for(cfg, forest.vocab_size));
            TrainOutput out =
                train(model, forest, tc, cfg.sampler, cfg.smote, cfg.triplet, full_fp,
                      config_text);
            Metrics test = evaluate(model, forest, Split::test);

            SeedResult sr;
            sr.seed = tc.seed;
            sr.best_epoch = out.best.epoch;
            sr.val_f1 = out.best.val_f1;
            sr.test_precision = test.precision;
            sr.test_recall = test.recall;
            sr.test_f1 = test.f1;
            sr.smote_skipped_batches = out.smote_skipped_batches;
            report.seeds.push_back(sr);

            std::ostringstream tag;
            tag << out_dir << "/seed" << tc.seed << "_" << report.ablation();
            std::vector<const Param*> cps;
            for (Param* p : model.params()) cps.push_back(p);
            save_checkpoint(tag.str() + ".ckpt", cps, out.best);
            write_run_log(tag.str() + "_runlog.csv", out.log);
            if (echo)
                std::cout << "seed " << tc.seed << " [" << report.ablation() << "] best epoch "
                          << out.best.epoch << " val F1 " << out.best.val_f1 << " test F1 "
                          << test.f1 << " (" << out.epochs_run << " epochs)\n";
        }
    } catch (const std::exception& e) {
        report.failed = true;
        report.failure = e.what();
        write_report(report_path, report);
        append_results_csv(out_dir + "/results.csv", report);
        throw;
    }

    write_report(report_path, report);
    append_results_csv(out_dir + "/results.csv", report);
    return report;
}

// Resumable cell: a finished report for this exact config (same dataset
// fingerprint and ablation, full seed count) is reused instead of rerun.
inline RunReport ensure_experiment(const RunConfig& cfg, const std::string& out_dir,
                                   bool echo = true) {
    DialogueForest probe = materialize_dataset(cfg.data);
    ForestMeta meta = meta_or_stub(probe, cfg.data.path);
    RunReport stub;
    stub.fingerprint = dataset_fingerprint(cfg, meta);
    stub.use_gau = cfg.model.use_gau;
    stub.use_gin = cfg.model.use_gin;
    stub.use_smote = cfg.train.use_smote;
    stub.use_triplet = cfg.train.use_triplet;
    std::ostringstream rp;
    rp << out_dir << "/report_" << std::hex << stub.fingerprint << "_" << stub.ablation()
       << ".json";
    if (std::filesystem::exists(rp.str())) {
        RunReport done = read_report(rp.str());
        if (!done.failed && static_cast<int>(done.seeds.size()) == cfg.train.n_runs) return done;
    }
    return run_experiment(cfg, out_dir, echo);
}

}  // namespace gsdfuse
