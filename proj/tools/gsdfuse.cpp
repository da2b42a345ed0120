// gsdfuse command line: dataset synthesis, training, evaluation, sweeps,
// and table emission.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
// GSDFUSE_DETERMINISTIC=0 releases the single-thread pledge (all current
// kernels are deterministic either way; the value is recorded with runs).

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gsdfuse/config.hpp"
#include "gsdfuse/experiment.hpp"
#include "gsdfuse/report.hpp"

using namespace gsdfuse;

namespace {

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config parse: ") + e.what());
    }
    return run_config_from_json(j);
}

void apply_ablation_flags(RunConfig& cfg, bool no_gau, bool no_gin, bool no_smote,
                          bool no_triplet) {
    if (no_gau) cfg.model.use_gau = false;
    if (no_gin) cfg.model.use_gin = false;
    if (no_smote) cfg.train.use_smote = false;
    if (no_triplet) cfg.train.use_triplet = false;
}

void apply_ablation_name(RunConfig& cfg, const std::string& name) {
    if (name == "all") return;
    std::stringstream ss(name);
    std::string part;
    while (std::getline(ss, part, '+')) {
        if (part == "no_gau")
            cfg.model.use_gau = false;
        else if (part == "no_gin")
            cfg.model.use_gin = false;
        else if (part == "no_smote")
            cfg.train.use_smote = false;
        else if (part == "no_triplet")
            cfg.train.use_triplet = false;
        else
            throw ConfigError("unknown ablation: " + part);
    }
}

int cmd_synth(const std::string& out, const std::string& codec, double srs, int trees, int seed,
              int vocab, int mean_tree_size, int max_len, int hc_pool, int lm_seed,
              double lm_alpha, double lm_eos_prob, int split_seed) {
    SandboxSpec spec;
    spec.codec = parse_codec(codec);
    spec.srs = srs;
    spec.n_trees = trees;
    spec.seed = static_cast<std::uint64_t>(seed);
    spec.mean_tree_size = mean_tree_size;
    spec.max_len = max_len;
    spec.hc_tree_size = hc_pool;
    TokenModel lm = TokenModel::random_bigram(vocab, static_cast<std::uint64_t>(lm_seed),
                                              lm_alpha, lm_eos_prob);
    DialogueForest forest = synthesize_sandbox(spec, lm);
    forest = split_forest(std::move(forest), {0.75, 0.125, 0.125},
                          static_cast<std::uint64_t>(split_seed));
    save_forest(forest, out);
    int stego = 0;
    for (const auto& n : forest.nodes) stego += n.label;
    std::cout << "wrote " << out << ": " << forest.num_nodes() << " nodes, "
              << forest.adjacency.size() << " edges, " << stego << " stego, BPW "
              << forest.meta->bpw_realized << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, int seed_override,
              bool no_gau, bool no_gin, bool no_smote, bool no_triplet) {
    RunConfig cfg = load_run_config(config_path);
    apply_ablation_flags(cfg, no_gau, no_gin, no_smote, no_triplet);
    if (seed_override >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed_override);
    RunReport rep = run_experiment(cfg, out_dir);
    std::cout << "mean test F1 " << detail::f1_pct(rep.mean_f1()) << "% over "
              << rep.seeds.size() << " seeds -> " << out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path,
             const std::string& data_path, const std::string& split) {
    RunConfig cfg = load_run_config(config_path);
    if (!data_path.empty()) cfg.data.path = data_path;
    DialogueForest forest = materialize_dataset(cfg.data);
    ForestMeta meta = meta_or_stub(forest, cfg.data.path);
    GsdFuseModel model(model_config_for(cfg, forest.vocab_size));
    model.init(0);
    CheckpointInfo info = load_checkpoint(ckpt_path, model.params());
    const std::string expect_text = canonical_config(cfg) + "|" + meta.canonical();
    const std::uint64_t expect_fp = config_fingerprint(cfg, meta);
    if (info.fingerprint != expect_fp) {
        std::cerr << "fingerprint mismatch: checkpoint " << std::hex << info.fingerprint
                  << " vs expected " << expect_fp << std::dec << "\n"
                  << "checkpoint config: " << info.config_text << "\n"
                  << "expected config:   " << expect_text << "\n";
        throw ConfigError("checkpoint does not match this config/dataset");
    }
    Metrics m = evaluate(model, forest, parse_split(split));
    std::cout << "split " << split << ": precision " << m.precision << " recall " << m.recall
              << " F1 " << m.f1 << " (tp " << m.tp << " fp " << m.fp << " fn " << m.fn << ")\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config " + config_path);
    nlohmann::json j;
    in >> j;
    RunConfig base = run_config_from_json(j);
    std::vector<double> srs_list{base.data.synth.srs};
    std::vector<std::string> codecs{codec_name(base.data.synth.codec)};
    std::vector<std::string> ablations{"all"};
    if (j.contains("sweep")) {
        const auto& s = j.at("sweep");
        if (s.contains("srs")) srs_list = s.at("srs").get<std::vector<double>>();
        if (s.contains("codecs")) codecs = s.at("codecs").get<std::vector<std::string>>();
        if (s.contains("ablations"))
            ablations = s.at("ablations").get<std::vector<std::string>>();
    }
    int cells = 0;
    for (const auto& codec : codecs)
        for (double srs : srs_list)
            for (const auto& ab : ablations) {
                RunConfig cfg = base;
                cfg.data.synth.codec = parse_codec(codec);
                cfg.data.synth.srs = srs;
                apply_ablation_name(cfg, ab);
                std::cout << "sweep cell codec=" << codec << " srs=" << srs << " ablation=" << ab
                          << "\n";
                ensure_experiment(cfg, out_dir);
                ++cells;
            }
    std::cout << "sweep finished: " << cells << " cells\n";
    return 0;
}

int cmd_report(const std::string& dir) {
    std::vector<RunReport> reports;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("report_", 0) == 0 && entry.path().extension() == ".json")
            reports.push_back(read_report(entry.path().string()));
    }
    ResultTable table = emit_table(reports);
    std::ofstream csv(dir + "/table.csv");
    csv << table.csv;
    std::ofstream txt(dir + "/table.txt");
    txt << table.text;
    std::cout << table.text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic stego-dialogue detection toolkit"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "generate a cover/stego dialogue forest");
    std::string s_out = "data.jsonl", s_codec = "hc";
    double s_srs = 0.1;
    int s_trees = 100, s_seed = 42, s_vocab = 256, s_mean = 8, s_maxlen = 32, s_pool = 32;
    int s_lm_seed = 7, s_split_seed = 42;
    double s_alpha = 0.3, s_eos = 0.08;
    synth->add_option("--out", s_out, "output JSONL path");
    synth->add_option("--codec", s_codec, "hc | ac | adg")->check(CLI::IsMember({"hc", "ac", "adg"}));
    synth->add_option("--srs", s_srs, "stego fraction of eligible leaves");
    synth->add_option("--trees", s_trees, "number of reply trees");
    synth->add_option("--seed", s_seed, "generation seed");
    synth->add_option("--vocab", s_vocab, "vocabulary size");
    synth->add_option("--mean-tree-size", s_mean, "expected nodes per tree");
    synth->add_option("--max-len", s_maxlen, "tokens per message cap");
    synth->add_option("--hc-pool", s_pool, "huffman candidate pool (power of two)");
    synth->add_option("--lm-seed", s_lm_seed, "language model seed");
    synth->add_option("--lm-alpha", s_alpha, "language model concentration");
    synth->add_option("--lm-eos-prob", s_eos, "end-token probability");
    synth->add_option("--split-seed", s_split_seed, "split assignment seed");

    auto* train_cmd = app.add_subcommand("train", "run the training experiment from a config");
    std::string t_config, t_out = "runs";
    int t_seed = -1;
    bool t_no_gau = false, t_no_gin = false, t_no_smote = false, t_no_triplet = false;
    train_cmd->add_option("--config", t_config, "run config JSON")->required();
    train_cmd->add_option("--out", t_out, "output directory");
    train_cmd->add_option("--seed", t_seed, "override base seed");
    train_cmd->add_flag("--no-gau", t_no_gau, "replace gated fusion with concat+affine");
    train_cmd->add_flag("--no-gin", t_no_gin, "drop the global structural summary");
    train_cmd->add_flag("--no-smote", t_no_smote, "disable minority oversampling");
    train_cmd->add_flag("--no-triplet", t_no_triplet, "disable the triplet term");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    std::string e_config, e_ckpt, e_data, e_split = "test";
    eval_cmd->add_option("--config", e_config, "run config JSON")->required();
    eval_cmd->add_option("--checkpoint", e_ckpt, "checkpoint archive")->required();
    eval_cmd->add_option("--data", e_data, "dataset JSONL (defaults to the config's)");
    eval_cmd->add_option("--split", e_split, "train | val | test")
        ->check(CLI::IsMember({"train", "val", "test"}));

    auto* sweep_cmd = app.add_subcommand("sweep", "run a (codec, srs, ablation) grid");
    std::string w_config, w_out = "runs";
    sweep_cmd->add_option("--config", w_config, "sweep config JSON")->required();
    sweep_cmd->add_option("--out", w_out, "output directory");

    auto* report_cmd = app.add_subcommand("report", "tabulate reports in a directory");
    std::string r_dir = "runs";
    report_cmd->add_option("--out", r_dir, "directory holding report_*.json");

    try {
        app.parse(argc, argv);
        if (synth->parsed())
            return cmd_synth(s_out, s_codec, s_srs, s_trees, s_seed, s_vocab, s_mean, s_maxlen,
                             s_pool, s_lm_seed, s_alpha, s_eos, s_split_seed);
        if (train_cmd->parsed())
            return cmd_train(t_config, t_out, t_seed, t_no_gau, t_no_gin, t_no_smote,
                             t_no_triplet);
        if (eval_cmd->parsed()) return cmd_eval(e_config, e_ckpt, e_data, e_split);
        if (sweep_cmd->parsed()) return cmd_sweep(w_config, w_out);
        if (report_cmd->parsed()) return cmd_report(r_dir);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
