#pragma once

// Cross-modal fusion. The three per-node feature vectors (semantic, local
// topological, global structural) are projected to a common width and
// treated as a 3-position sequence through one gated attention block:
// a shared low-width transform provides queries and keys via per-use scale
// and offset, a gate and a value branch run at twice the model width, and
// the attention matrix passes through the Laplace activation
//   laplace(x) = 0.5 * (1 + erf((x - mu) / (sigma * sqrt(2)))),
//   mu = sqrt(1/2), sigma = sqrt(1/(4*pi)),
// scaled by 1/n_positions before aggregating values. The fused vector is
// the mean over positions. A plain concat+affine fallback stands in when
// gated fusion is ablated.

#include <vector>

#include <Eigen/Dense>

#include "gsdfuse/common.hpp"
#include "gsdfuse/nn_core.hpp"

namespace gsdfuse {

struct FusionConfig {
    int s_dim = 384;
    int h_dim = 192;
    int g_dim = 192;
    int dim = 192;       // common projection width and fused output width
    int expansion = 2;   // gate/value width multiplier
    double dropout = 0.2;
    bool use_gau = true;
    bool use_global = true;  // whether the structural summary participates

    int qk_dim() const {
        if (dim % 4 != 0) throw ConfigError("fusion dim must be divisible by 4");
        return dim / 4;
    }
    int positions() const { return use_global ? 3 : 2; }
};

namespace detail {

inline double laplace_attn(double x) {
    constexpr double mu = 0.70710678118654752440;     // sqrt(1/2)
    constexpr double sigma = 0.28209479177387814347;  // sqrt(1/(4*pi))
    return 0.5 * (1.0 + std::erf((x - mu) / (sigma * 1.41421356237309504880)));
}

inline double laplace_attn_grad(double x) {
    constexpr double mu = 0.70710678118654752440;
    constexpr double sigma = 0.28209479177387814347;
    double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * 2.50662827463100050242);  // sqrt(2*pi)
}

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline double silu_grad(double x) {
    double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

}  // namespace detail

class GatedFusion {
public:
    explicit GatedFusion(const FusionConfig& cfg) : cfg_(cfg) {
        const int d = cfg.dim;
        const int e = cfg.expansion * d;
        const int qk = cfg.qk_dim();
        if (cfg.use_gau) {
            proj_s_w_ = Param("gau.proj_s.w", cfg.s_dim, d);
            proj_s_b_ = Param("gau.proj_s.b", d, 1);
            proj_h_w_ = Param("gau.proj_h.w", cfg.h_dim, d);
            proj_h_b_ = Param("gau.proj_h.b", d, 1);
            if (cfg.use_global) {
                proj_g_w_ = Param("gau.proj_g.w", cfg.g_dim, d);
                proj_g_b_ = Param("gau.proj_g.b", d, 1);
            }
            norm_gamma_ = Param("gau.norm.gamma", d, 1);
            norm_beta_ = Param("gau.norm.beta", d, 1);
            z_w_ = Param("gau.z.w", d, qk);
            z_b_ = Param("gau.z.b", qk, 1);
            gamma_q_ = Param("gau.gamma_q", qk, 1);
            beta_q_ = Param("gau.beta_q", qk, 1);
            gamma_k_ = Param("gau.gamma_k", qk, 1);
            beta_k_ = Param("gau.beta_k", qk, 1);
            u_w_ = Param("gau.u.w", d, e);
            u_b_ = Param("gau.u.b", e, 1);
            v_w_ = Param("gau.v.w", d, e);
            v_b_ = Param("gau.v.b", e, 1);
            o_w_ = Param("gau.w_o.w", e, d);
            o_b_ = Param("gau.w_o.b", d, 1);
        } else {
            int cat = cfg.s_dim + cfg.h_dim + (cfg.use_global ? cfg.g_dim : 0);
            norm_gamma_ = Param("fuse.norm.gamma", cat, 1);
            norm_beta_ = Param("fuse.norm.beta", cat, 1);
            concat_w_ = Param("fuse.concat.w", cat, d);
            concat_b_ = Param("fuse.concat.b", d, 1);
        }
    }

    void init(std::uint64_t seed) {
        for (Param* p : params()) {
            if (p->name.find(".b") != std::string::npos || p->name.find("beta") != std::string::npos)
                p->v.setZero();
            else if (p->name.find("gamma") != std::string::npos)
                p->v.setOnes();
            else
                p->init_xavier(seed);
        }
    }

    std::vector<Param*> params() {
        std::vector<Param*> out;
        if (cfg_.use_gau) {
            for (Param* p : {&proj_s_w_, &proj_s_b_, &proj_h_w_, &proj_h_b_}) out.push_back(p);
            if (cfg_.use_global)
                for (Param* p : {&proj_g_w_, &proj_g_b_}) out.push_back(p);
            for (Param* p : {&norm_gamma_, &norm_beta_, &z_w_, &z_b_, &gamma_q_, &beta_q_,
                             &gamma_k_, &beta_k_, &u_w_, &u_b_, &v_w_, &v_b_, &o_w_, &o_b_})
                out.push_back(p);
        } else {
            out.push_back(&concat_w_);
            out.push_back(&concat_b_);
        }
        return out;
    }

    // s: N x s_dim, h: N x h_dim, g: N x g_dim (ignored unless use_global).
    Eigen::MatrixXd forward(const Eigen::MatrixXd& s, const Eigen::MatrixXd& h,
                            const Eigen::MatrixXd& g, bool train, bool need_grad,
                            Rng& dropout_rng) {
        if (!s.allFinite() || !h.allFinite() || (cfg_.use_global && !g.allFinite()))
            throw NumericError("non-finite features entering fusion");
        need_grad_ = need_grad;
        const int n = static_cast<int>(s.rows());
        if (!cfg_.use_gau) {
            Eigen::MatrixXd cat(n, concat_w_.v.rows());
            cat.leftCols(cfg_.s_dim) = s;
            cat.middleCols(cfg_.s_dim, cfg_.h_dim) = h;
            if (cfg_.use_global) cat.rightCols(cfg_.g_dim) = g;
            if (need_grad) cat_in_ = cat;
            return (cat * concat_w_.v).rowwise() + concat_b_.v.col(0).transpose();
        }

        const int np = cfg_.positions();
        const int d = cfg_.dim;
        const int e = cfg_.expansion * d;
        const int qk = cfg_.qk_dim();

        RowMat x_raw(static_cast<Eigen::Index>(n) * np, d);
        Eigen::MatrixXd xs = (s * proj_s_w_.v).rowwise() + proj_s_b_.v.col(0).transpose();
        Eigen::MatrixXd xh = (h * proj_h_w_.v).rowwise() + proj_h_b_.v.col(0).transpose();
        Eigen::MatrixXd xg;
        if (cfg_.use_global)
            xg = (g * proj_g_w_.v).rowwise() + proj_g_b_.v.col(0).transpose();
        for (int i = 0; i < n; ++i) {
            x_raw.row(static_cast<Eigen::Index>(i) * np + 0) = xs.row(i);
            x_raw.row(static_cast<Eigen::Index>(i) * np + 1) = xh.row(i);
            if (cfg_.use_global) x_raw.row(static_cast<Eigen::Index>(i) * np + 2) = xg.row(i);
        }

        // block-entry layer norm (the gated-attention lineage default)
        RowMat x_hat(x_raw.rows(), d);
        Eigen::VectorXd inv_sigma(x_raw.rows());
        for (Eigen::Index r = 0; r < x_raw.rows(); ++r) {
            double mu = x_raw.row(r).mean();
            double var = (x_raw.row(r).array() - mu).square().mean();
            inv_sigma[r] = 1.0 / std::sqrt(var + 1e-5);
            x_hat.row(r) = (x_raw.row(r).array() - mu) * inv_sigma[r];
        }
        RowMat x =
            (x_hat.array().rowwise() * norm_gamma_.v.col(0).transpose().array()).matrix()
                .rowwise() +
            norm_beta_.v.col(0).transpose();

        RowMat z_pre = (x * z_w_.v).rowwise() + z_b_.v.col(0).transpose();
        RowMat z = z_pre.unaryExpr(&detail::silu);
        RowMat u_pre = (x * u_w_.v).rowwise() + u_b_.v.col(0).transpose();
        RowMat u = u_pre.unaryExpr(&detail::silu);
        RowMat v_pre = (x * v_w_.v).rowwise() + v_b_.v.col(0).transpose();
        RowMat v = v_pre.unaryExpr(&detail::silu);

        RowMat q =
            (z.array().rowwise() * gamma_q_.v.col(0).transpose().array()).matrix().rowwise() +
            beta_q_.v.col(0).transpose();
        RowMat k =
            (z.array().rowwise() * gamma_k_.v.col(0).transpose().array()).matrix().rowwise() +
            beta_k_.v.col(0).transpose();

        RowMat sim(static_cast<Eigen::Index>(n) * np, np);
        RowMat attn(static_cast<Eigen::Index>(n) * np, np);
        RowMat attn_v = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) * np, e);
        RowMat amask = train ? dropout_mask(static_cast<Eigen::Index>(n) * np, np,
                                                     cfg_.dropout, dropout_rng)
                                      : Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n) * np, np);
        const double inv_qk = 1.0 / static_cast<double>(qk);
        const double inv_np = 1.0 / static_cast<double>(np);
        for (int i = 0; i < n; ++i) {
            const Eigen::Index r0 = static_cast<Eigen::Index>(i) * np;
            for (int p = 0; p < np; ++p)
                for (int j = 0; j < np; ++j) {
                    double dot = 0.0;
                    for (int c = 0; c < qk; ++c) dot += q(r0 + p, c) * k(r0 + j, c);
                    double si = dot * inv_qk;
                    sim(r0 + p, j) = si;
                    attn(r0 + p, j) = detail::laplace_attn(si) * amask(r0 + p, j);
                }
            for (int col = 0; col < e; ++col)
                for (int p = 0; p < np; ++p) {
                    double acc = 0.0;
                    for (int j = 0; j < np; ++j) acc += attn(r0 + p, j) * v(r0 + j, col);
                    attn_v(r0 + p, col) = acc * inv_np;
                }
        }

        RowMat gated = u.cwiseProduct(attn_v);
        RowMat o = (gated * o_w_.v).rowwise() + o_b_.v.col(0).transpose();

        Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n, d);
        for (int i = 0; i < n; ++i) {
            for (int p = 0; p < np; ++p) f.row(i) += o.row(static_cast<Eigen::Index>(i) * np + p);
            f.row(i) /= static_cast<double>(np);
        }

        if (need_grad) {
            s_in_ = s;
            h_in_ = h;
            if (cfg_.use_global) g_in_ = g;
            x_hat_ = std::move(x_hat);
            inv_sigma_ = std::move(inv_sigma);
            x_ = std::move(x);
            z_pre_ = std::move(z_pre);
            z_ = std::move(z);
            u_pre_ = std::move(u_pre);
            u_ = std::move(u);
            v_pre_ = std::move(v_pre);
            v_ = std::move(v);
            q_ = std::move(q);
            k_ = std::move(k);
            sim_ = std::move(sim);
            attn_ = std::move(attn);
            attn_v_ = std::move(attn_v);
            amask_ = std::move(amask);
            gated_ = std::move(gated);
        }
        return f;
    }

    struct InputGrads {
        Eigen::MatrixXd ds, dh, dg;
    };

    InputGrads backward(const Eigen::MatrixXd& d_f) {
        if (!need_grad_) throw NumericError("fusion forward ran without need_grad");
        const int n = static_cast<int>(d_f.rows());
        InputGrads out;
        if (!cfg_.use_gau) {
            concat_b_.g.col(0) += d_f.colwise().sum().transpose();
            concat_w_.g += cat_in_.transpose() * d_f;
            Eigen::MatrixXd d_cat = d_f * concat_w_.v.transpose();
            out.ds = d_cat.leftCols(cfg_.s_dim);
            out.dh = d_cat.middleCols(cfg_.s_dim, cfg_.h_dim);
            if (cfg_.use_global) out.dg = d_cat.rightCols(cfg_.g_dim);
            return out;
        }

        const int np = cfg_.positions();
        const int qk = cfg_.qk_dim();

        RowMat d_o(static_cast<Eigen::Index>(n) * np, cfg_.dim);
        for (int i = 0; i < n; ++i)
            for (int p = 0; p < np; ++p)
                d_o.row(static_cast<Eigen::Index>(i) * np + p) =
                    d_f.row(i) / static_cast<double>(np);

        o_b_.g.col(0) += d_o.colwise().sum().transpose();
        o_w_.g += gated_.transpose() * d_o;
        RowMat d_gated = d_o * o_w_.v.transpose();

        RowMat d_u = d_gated.cwiseProduct(attn_v_);
        RowMat d_attn_v = d_gated.cwiseProduct(u_);

        RowMat d_q = Eigen::MatrixXd::Zero(q_.rows(), q_.cols());
        RowMat d_k = Eigen::MatrixXd::Zero(k_.rows(), k_.cols());
        RowMat d_v = Eigen::MatrixXd::Zero(v_.rows(), v_.cols());
        const int e = cfg_.expansion * cfg_.dim;
        const double inv_qk = 1.0 / static_cast<double>(qk);
        const double inv_np = 1.0 / static_cast<double>(np);
        double d_si_buf[9];
        for (int i = 0; i < n; ++i) {
            const Eigen::Index r0 = static_cast<Eigen::Index>(i) * np;
            for (int p = 0; p < np; ++p)
                for (int j = 0; j < np; ++j) {
                    double d_ai = 0.0;
                    for (int col = 0; col < e; ++col)
                        d_ai += d_attn_v(r0 + p, col) * v_(r0 + j, col);
                    d_ai *= inv_np;
                    d_si_buf[p * np + j] = d_ai * amask_(r0 + p, j) *
                                           detail::laplace_attn_grad(sim_(r0 + p, j));
                }
            for (int col = 0; col < e; ++col)
                for (int j = 0; j < np; ++j) {
                    double acc = 0.0;
                    for (int p = 0; p < np; ++p) acc += attn_(r0 + p, j) * d_attn_v(r0 + p, col);
                    d_v(r0 + j, col) = acc * inv_np;
                }
            for (int c = 0; c < qk; ++c)
                for (int p = 0; p < np; ++p) {
                    double accq = 0.0, acck = 0.0;
                    for (int j = 0; j < np; ++j) {
                        accq += d_si_buf[p * np + j] * k_(r0 + j, c);
                        acck += d_si_buf[j * np + p] * q_(r0 + j, c);
                    }
                    d_q(r0 + p, c) = accq * inv_qk;
                    d_k(r0 + p, c) = acck * inv_qk;
                }
        }

        gamma_q_.g.col(0) += d_q.cwiseProduct(z_).colwise().sum().transpose();
        beta_q_.g.col(0) += d_q.colwise().sum().transpose();
        gamma_k_.g.col(0) += d_k.cwiseProduct(z_).colwise().sum().transpose();
        beta_k_.g.col(0) += d_k.colwise().sum().transpose();
        RowMat d_z =
            (d_q.array().rowwise() * gamma_q_.v.col(0).transpose().array()).matrix() +
            (d_k.array().rowwise() * gamma_k_.v.col(0).transpose().array()).matrix();

        RowMat d_z_pre = d_z.cwiseProduct(z_pre_.unaryExpr(&detail::silu_grad));
        RowMat d_u_pre = d_u.cwiseProduct(u_pre_.unaryExpr(&detail::silu_grad));
        RowMat d_v_pre = d_attn_v_to_v_pre(d_v);

        z_b_.g.col(0) += d_z_pre.colwise().sum().transpose();
        z_w_.g += x_.transpose() * d_z_pre;
        u_b_.g.col(0) += d_u_pre.colwise().sum().transpose();
        u_w_.g += x_.transpose() * d_u_pre;
        v_b_.g.col(0) += d_v_pre.colwise().sum().transpose();
        v_w_.g += x_.transpose() * d_v_pre;

        RowMat d_x = d_z_pre * z_w_.v.transpose() + d_u_pre * u_w_.v.transpose() +
                              d_v_pre * v_w_.v.transpose();

        // layer norm backward
        norm_gamma_.g.col(0) += d_x.cwiseProduct(x_hat_).colwise().sum().transpose();
        norm_beta_.g.col(0) += d_x.colwise().sum().transpose();
        RowMat d_xhat =
            (d_x.array().rowwise() * norm_gamma_.v.col(0).transpose().array()).matrix();
        RowMat d_x_raw(d_x.rows(), d_x.cols());
        for (Eigen::Index r = 0; r < d_x.rows(); ++r) {
            double m1 = d_xhat.row(r).mean();
            double m2 = d_xhat.row(r).cwiseProduct(x_hat_.row(r)).mean();
            d_x_raw.row(r) =
                (d_xhat.row(r).array() - m1 - x_hat_.row(r).array() * m2) * inv_sigma_[r];
        }
        d_x = std::move(d_x_raw);

        Eigen::MatrixXd d_xs(n, cfg_.dim), d_xh(n, cfg_.dim), d_xg(n, cfg_.dim);
        for (int i = 0; i < n; ++i) {
            d_xs.row(i) = d_x.row(static_cast<Eigen::Index>(i) * np + 0);
            d_xh.row(i) = d_x.row(static_cast<Eigen::Index>(i) * np + 1);
            if (cfg_.use_global) d_xg.row(i) = d_x.row(static_cast<Eigen::Index>(i) * np + 2);
        }
        proj_s_b_.g.col(0) += d_xs.colwise().sum().transpose();
        proj_s_w_.g += s_in_.transpose() * d_xs;
        out.ds = d_xs * proj_s_w_.v.transpose();
        proj_h_b_.g.col(0) += d_xh.colwise().sum().transpose();
        proj_h_w_.g += h_in_.transpose() * d_xh;
        out.dh = d_xh * proj_h_w_.v.transpose();
        if (cfg_.use_global) {
            proj_g_b_.g.col(0) += d_xg.colwise().sum().transpose();
            proj_g_w_.g += g_in_.transpose() * d_xg;
            out.dg = d_xg * proj_g_w_.v.transpose();
        }
        return out;
    }

    const FusionConfig& config() const { return cfg_; }

private:
    RowMat d_attn_v_to_v_pre(const RowMat& d_v) {
        return d_v.cwiseProduct(v_pre_.unaryExpr(&detail::silu_grad));
    }

    FusionConfig cfg_;
    Param proj_s_w_, proj_s_b_, proj_h_w_, proj_h_b_, proj_g_w_, proj_g_b_;
    Param norm_gamma_, norm_beta_;
    Param z_w_, z_b_, gamma_q_, beta_q_, gamma_k_, beta_k_;
    Param u_w_, u_b_, v_w_, v_b_, o_w_, o_b_;
    Param concat_w_, concat_b_;

    Eigen::MatrixXd s_in_, h_in_, g_in_, cat_in_;
    RowMat x_hat_, x_, z_pre_, z_, u_pre_, u_, v_pre_, v_, q_, k_;
    Eigen::VectorXd inv_sigma_;
    RowMat sim_, attn_, attn_v_, amask_, gated_;
    bool need_grad_ = false;
};

// Binary decision head over fused vectors.
class ClassifierHead {
public:
    explicit ClassifierHead(int in_dim) {
        w_ = Param("head.affine.w", in_dim, 2);
        b_ = Param("head.affine.b", 2, 1);
    }

    void init(std::uint64_t seed) {
        w_.init_xavier(seed);
        b_.v.setZero();
    }

    std::vector<Param*> params() { return {&w_, &b_}; }

    Eigen::MatrixXd forward(const Eigen::MatrixXd& f, bool need_grad) {
        if (need_grad) f_in_ = f;
        need_grad_ = need_grad;
        return (f * w_.v).rowwise() + b_.v.col(0).transpose();
    }

    Eigen::MatrixXd backward(const Eigen::MatrixXd& d_logits) {
        if (!need_grad_) throw NumericError("head forward ran without need_grad");
        b_.g.col(0) += d_logits.colwise().sum().transpose();
        w_.g += f_in_.transpose() * d_logits;
        return d_logits * w_.v.transpose();
    }

    // Stego wins only on a strictly larger logit; exact ties stay cover.
    static int predict(double logit_cover, double logit_stego) {
        return logit_stego > logit_cover ? 1 : 0;
    }

    static Eigen::Vector2d softmax(double logit_cover, double logit_stego) {
        double m = std::max(logit_cover, logit_stego);
        double ec = std::exp(logit_cover - m), es = std::exp(logit_stego - m);
        return {ec / (ec + es), es / (ec + es)};
    }

private:
    Param w_, b_;
    Eigen::MatrixXd f_in_;
    bool need_grad_ = false;
};

}  // namespace gsdfuse
