#pragma once

// Parameter plumbing shared by every trainable module: named tensors with
// gradients, seeded initializers, Adam, dropout masks, and the checkpoint
// archive (binary named-tensor format with a shape manifest).

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gsdfuse/common.hpp"

namespace gsdfuse {

// Row-major activations: the per-node scalar loops walk rows contiguously.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Param {
    std::string name;
    Eigen::MatrixXd v;  // value
    Eigen::MatrixXd g;  // gradient, same shape

    Param() = default;
    Param(std::string n, Eigen::Index rows, Eigen::Index cols)
        : name(std::move(n)), v(Eigen::MatrixXd::Zero(rows, cols)),
          g(Eigen::MatrixXd::Zero(rows, cols)) {}

    void zero_grad() { g.setZero(); }

    // Xavier/Glorot uniform, seeded per tensor from the name so layout
    // changes elsewhere cannot silently reshuffle streams.
    void init_xavier(std::uint64_t seed) {
        Rng rng(derive_seed(seed, fnv1a64(name)));
        double limit = std::sqrt(6.0 / static_cast<double>(v.rows() + v.cols()));
        for (Eigen::Index c = 0; c < v.cols(); ++c)
            for (Eigen::Index r = 0; r < v.rows(); ++r)
                v(r, c) = (2.0 * uniform01(rng) - 1.0) * limit;
    }

    void init_normal(std::uint64_t seed, double stddev) {
        Rng rng(derive_seed(seed, fnv1a64(name)));
        for (Eigen::Index c = 0; c < v.cols(); ++c)
            for (Eigen::Index r = 0; r < v.rows(); ++r) v(r, c) = stddev * normal01(rng);
    }
};

class Adam {
public:
    Adam(double lr = 0.01, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
         double weight_decay = 0.0)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {}

    void step(const std::vector<Param*>& params) {
        if (m_.empty()) {
            for (auto* p : params) {
                m_.push_back(Eigen::MatrixXd::Zero(p->v.rows(), p->v.cols()));
                v_.push_back(Eigen::MatrixXd::Zero(p->v.rows(), p->v.cols()));
            }
        }
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            Param& p = *params[i];
            Eigen::MatrixXd grad = p.g;
            if (wd_ != 0.0) grad += wd_ * p.v;
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad;
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad.cwiseProduct(grad);
            Eigen::MatrixXd mhat = m_[i] / bc1;
            Eigen::MatrixXd vhat = v_[i] / bc2;
            p.v -= lr_ * (mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
        }
    }

    double lr() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_, wd_;
    long t_ = 0;
    std::vector<Eigen::MatrixXd> m_, v_;
};

// Inverted dropout mask: entries are 0 or 1/(1-rate).
inline Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
    Eigen::MatrixXd mask(rows, cols);
    double keep = 1.0 - rate;
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r)
            mask(r, c) = uniform01(rng) < keep ? 1.0 / keep : 0.0;
    return mask;
}

// --- checkpoint archive ------------------------------------------------------

struct CheckpointInfo {
    std::uint64_t fingerprint = 0;
    int epoch = 0;
    double val_f1 = 0.0;
    std::string config_text;  // canonical config, kept for mismatch diffs
};

namespace detail {

inline void put_u32(std::ofstream& out, std::uint32_t x) {
    out.write(reinterpret_cast<const char*>(&x), sizeof(x));
}
inline void put_u64(std::ofstream& out, std::uint64_t x) {
    out.write(reinterpret_cast<const char*>(&x), sizeof(x));
}
inline void put_f64(std::ofstream& out, double x) {
    out.write(reinterpret_cast<const char*>(&x), sizeof(x));
}
inline std::uint32_t get_u32(std::ifstream& in) {
    std::uint32_t x = 0;
    in.read(reinterpret_cast<char*>(&x), sizeof(x));
    return x;
}
inline std::uint64_t get_u64(std::ifstream& in) {
    std::uint64_t x = 0;
    in.read(reinterpret_cast<char*>(&x), sizeof(x));
    return x;
}
inline double get_f64(std::ifstream& in) {
    double x = 0;
    in.read(reinterpret_cast<char*>(&x), sizeof(x));
    return x;
}

constexpr std::uint32_t kArchiveMagic = 0x54445347;  // "GSDT"
constexpr std::uint32_t kArchiveVersion = 1;

}  // namespace detail

inline void save_checkpoint(const std::string& path, const std::vector<const Param*>& params,
                            const CheckpointInfo& info) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint " + path);
    detail::put_u32(out, detail::kArchiveMagic);
    detail::put_u32(out, detail::kArchiveVersion);
    detail::put_u64(out, info.fingerprint);
    detail::put_u32(out, static_cast<std::uint32_t>(info.epoch));
    detail::put_f64(out, info.val_f1);
    detail::put_u32(out, static_cast<std::uint32_t>(info.config_text.size()));
    out.write(info.config_text.data(), static_cast<std::streamsize>(info.config_text.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const Param* p : params) {
        detail::put_u32(out, static_cast<std::uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        detail::put_u32(out, static_cast<std::uint32_t>(p->v.rows()));
        detail::put_u32(out, static_cast<std::uint32_t>(p->v.cols()));
        for (Eigen::Index r = 0; r < p->v.rows(); ++r)
            for (Eigen::Index c = 0; c < p->v.cols(); ++c) detail::put_f64(out, p->v(r, c));
    }
}

// Loads into an existing parameter set; names and shapes must match the
// manifest exactly.
inline CheckpointInfo load_checkpoint(const std::string& path,
                                      const std::vector<Param*>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint " + path);
    if (detail::get_u32(in) != detail::kArchiveMagic)
        throw ParseError("not a checkpoint archive: " + path);
    if (detail::get_u32(in) != detail::kArchiveVersion)
        throw ParseError("unsupported checkpoint version in " + path);
    CheckpointInfo info;
    info.fingerprint = detail::get_u64(in);
    info.epoch = static_cast<int>(detail::get_u32(in));
    info.val_f1 = detail::get_f64(in);
    std::uint32_t cfg_len = detail::get_u32(in);
    info.config_text.resize(cfg_len);
    in.read(info.config_text.data(), cfg_len);
    std::uint32_t n = detail::get_u32(in);
    if (n != params.size()) throw ParseError("checkpoint tensor count mismatch");
    for (std::uint32_t i = 0; i < n; ++i) {
        std::uint32_t name_len = detail::get_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        std::uint32_t rows = detail::get_u32(in);
        std::uint32_t cols = detail::get_u32(in);
        Param* p = params[i];
        if (p->name != name)
            throw ParseError("checkpoint tensor " + std::to_string(i) + " is '" + name +
                             "', expected '" + p->name + "'");
        if (rows != p->v.rows() || cols != p->v.cols())
            throw ParseError("shape mismatch for tensor " + name);
        for (std::uint32_t r = 0; r < rows; ++r)
            for (std::uint32_t c = 0; c < cols; ++c) p->v(r, c) = detail::get_f64(in);
    }
    if (!in) throw ParseError("truncated checkpoint " + path);
    return info;
}

}  // namespace gsdfuse
