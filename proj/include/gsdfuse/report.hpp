#pragma once

// Experiment reports: per-seed metrics with their aggregate, persisted as
// JSON, appended to a shared results CSV under an exclusive file lock, and
// rendered as the final (codec, srs, ablation) table.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gsdfuse/common.hpp"
#include "gsdfuse/forest.hpp"

namespace gsdfuse {

struct SeedResult {
    std::uint64_t seed = 0;
    int best_epoch = 0;
    double val_f1 = 0.0;
    double test_precision = 0.0;
    double test_recall = 0.0;
    double test_f1 = 0.0;
    int smote_skipped_batches = 0;
};

struct RunReport {
    ForestMeta meta;
    std::uint64_t fingerprint = 0;
    bool use_gau = true, use_gin = true, use_smote = true, use_triplet = true;
    std::vector<SeedResult> seeds;
    bool failed = false;
    std::string failure;

    std::string ablation() const {
        if (use_gau && use_gin && use_smote && use_triplet) return "all";
        std::string s;
        if (!use_gau) s += s.empty() ? "no_gau" : "+no_gau";
        if (!use_gin) s += s.empty() ? "no_gin" : "+no_gin";
        if (!use_smote) s += s.empty() ? "no_smote" : "+no_smote";
        if (!use_triplet) s += s.empty() ? "no_triplet" : "+no_triplet";
        return s;
    }

    double mean_f1() const {
        if (seeds.empty()) return 0.0;
        double m = 0.0;
        for (const auto& s : seeds) m += s.test_f1;
        return m / static_cast<double>(seeds.size());
    }

    double std_f1() const {
        if (seeds.size() < 2) return 0.0;
        double m = mean_f1(), v = 0.0;
        for (const auto& s : seeds) v += (s.test_f1 - m) * (s.test_f1 - m);
        return std::sqrt(v / static_cast<double>(seeds.size()));
    }

    nlohmann::json to_json() const {
        nlohmann::json js = nlohmann::json::array();
        for (const auto& s : seeds)
            js.push_back({{"seed", s.seed},
                          {"best_epoch", s.best_epoch},
                          {"val_f1", s.val_f1},
                          {"test_precision", s.test_precision},
                          {"test_recall", s.test_recall},
                          {"test_f1", s.test_f1},
                          {"smote_skipped_batches", s.smote_skipped_batches}});
        return {{"dataset", meta.to_json()},
                {"fingerprint", fingerprint},
                {"use_gau", use_gau},
                {"use_gin", use_gin},
                {"use_smote", use_smote},
                {"use_triplet", use_triplet},
                {"ablation", ablation()},
                {"seeds", js},
                {"deterministic", deterministic_mode()},
                {"mean_f1", mean_f1()},
                {"std_f1", std_f1()},
                {"failed", failed},
                {"failure", failure}};
    }

    static RunReport from_json(const nlohmann::json& j) {
        RunReport r;
        r.meta = ForestMeta::from_json(j.at("dataset"));
        r.fingerprint = j.at("fingerprint").get<std::uint64_t>();
        r.use_gau = j.at("use_gau").get<bool>();
        r.use_gin = j.at("use_gin").get<bool>();
        r.use_smote = j.at("use_smote").get<bool>();
        r.use_triplet = j.at("use_triplet").get<bool>();
        r.failed = j.value("failed", false);
        r.failure = j.value("failure", std::string{});
        for (const auto& js : j.at("seeds")) {
            SeedResult s;
            s.seed = js.at("seed").get<std::uint64_t>();
            s.best_epoch = js.at("best_epoch").get<int>();
            s.val_f1 = js.at("val_f1").get<double>();
            s.test_precision = js.at("test_precision").get<double>();
            s.test_recall = js.at("test_recall").get<double>();
            s.test_f1 = js.at("test_f1").get<double>();
            s.smote_skipped_batches = js.value("smote_skipped_batches", 0);
            r.seeds.push_back(s);
        }
        return r;
    }
};

inline void write_report(const std::string& path, const RunReport& r) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write report " + path);
    out << r.to_json().dump(2) << "\n";
}

inline RunReport read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open report " + path);
    nlohmann::json j;
    in >> j;
    return RunReport::from_json(j);
}

namespace detail {

// RAII advisory lock; concurrent sweep cells serialize their appends on it.
class FileLock {
public:
    explicit FileLock(const std::string& path) {
        fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0) throw ConfigError("cannot lock " + path);
        struct flock fl{};
        fl.l_type = F_WRLCK;
        fl.l_whence = SEEK_SET;
        ::fcntl(fd_, F_SETLKW, &fl);
    }
    ~FileLock() {
        if (fd_ >= 0) {
            struct flock fl{};
            fl.l_type = F_UNLCK;
            fl.l_whence = SEEK_SET;
            ::fcntl(fd_, F_SETLK, &fl);
            ::close(fd_);
        }
    }

private:
    int fd_ = -1;
};

inline std::string f1_pct(double f1) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << 100.0 * f1;
    return os.str();
}

}  // namespace detail

inline const char* kResultsHeader =
    "fingerprint,codec,srs,bpw,ablation,n_seeds,mean_f1_pct,std_f1_pct,duplicate";

// Append-only shared results file. A row whose (fingerprint, ablation) was
// already recorded gets marked as a duplicate rather than dropped.
inline void append_results_csv(const std::string& path, const RunReport& r) {
    detail::FileLock lock(path + ".lock");
    bool exists = false, duplicate = false;
    {
        std::ifstream in(path);
        std::string line;
        std::ostringstream key;
        key << std::hex << r.fingerprint;
        while (std::getline(in, line)) {
            if (!exists && !line.empty()) exists = true;
            if (line.rfind(key.str() + ",", 0) == 0 &&
                line.find("," + r.ablation() + ",") != std::string::npos)
                duplicate = true;
        }
    }
    std::ofstream out(path, std::ios::app);
    if (!out) throw ConfigError("cannot append results " + path);
    if (!exists) out << kResultsHeader << "\n";
    out << std::hex << r.fingerprint << std::dec << ',' << r.meta.codec << ',' << r.meta.srs
        << ',' << r.meta.bpw_realized << ',' << r.ablation() << ',' << r.seeds.size() << ','
        << detail::f1_pct(r.mean_f1()) << ',' << detail::f1_pct(r.std_f1()) << ','
        << (duplicate ? "yes" : "no") << "\n";
}

struct ResultTable {
    std::string csv;
    std::string text;
};

// One row per (codec, srs, ablation), ordered codec then srs ascending.
// Reports over different vocabularies cannot be merged into one table.
inline ResultTable emit_table(std::vector<RunReport> reports) {
    if (reports.empty()) throw ConfigError("no reports to tabulate");
    for (const auto& r : reports)
        if (r.meta.vocab_size != reports.front().meta.vocab_size)
            throw ConfigError("refusing to merge reports with different vocabularies");
    std::sort(reports.begin(), reports.end(), [](const RunReport& a, const RunReport& b) {
        if (a.meta.codec != b.meta.codec) return a.meta.codec < b.meta.codec;
        if (a.meta.srs != b.meta.srs) return a.meta.srs < b.meta.srs;
        return a.ablation() < b.ablation();
    });
    std::ostringstream csv, text;
    csv << "codec,srs,bpw,ablation,mean_f1_pct,std_f1_pct,n_seeds\n";
    text << std::left << std::setw(6) << "codec" << std::setw(6) << "srs" << std::setw(8)
         << "bpw" << std::setw(16) << "ablation" << std::right << std::setw(10) << "F1(%)"
         << std::setw(10) << "std" << "\n";
    for (const auto& r : reports) {
        csv << r.meta.codec << ',' << r.meta.srs << ',' << r.meta.bpw_realized << ','
            << r.ablation() << ',' << detail::f1_pct(r.mean_f1()) << ','
            << detail::f1_pct(r.std_f1()) << ',' << r.seeds.size() << "\n";
        std::ostringstream bpw;
        bpw << std::fixed << std::setprecision(2) << r.meta.bpw_realized;
        text << std::left << std::setw(6) << r.meta.codec << std::setw(6) << r.meta.srs
             << std::setw(8) << bpw.str() << std::setw(16) << r.ablation() << std::right
             << std::setw(10) << detail::f1_pct(r.mean_f1()) << std::setw(10)
             << detail::f1_pct(r.std_f1()) << "\n";
    }
    return {csv.str(), text.str()};
}

}  // namespace gsdfuse
