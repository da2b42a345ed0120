#include <catch_amalgamated.hpp>

#include "fd_util.hpp"
#include "gsdfuse/fusion.hpp"

using namespace gsdfuse;

namespace {

FusionConfig small_cfg(bool use_gau = true, bool use_global = true) {
    FusionConfig cfg;
    cfg.s_dim = 6;
    cfg.h_dim = 4;
    cfg.g_dim = 4;
    cfg.dim = 8;  // qk = 2
    cfg.expansion = 2;
    cfg.dropout = 0.0;
    cfg.use_gau = use_gau;
    cfg.use_global = use_global;
    return cfg;
}

}  // namespace

TEST_CASE("laplace activation: monotone, bounded, half at mu") {
    double mu = std::sqrt(0.5);
    REQUIRE(detail::laplace_attn(mu) == 0.5);
    // strictly increasing and strictly inside (0,1) wherever erf has not
    // saturated to +-1 in double precision
    double prev = 0.0;
    for (double x = -1.5; x <= 2.9; x += 0.05) {
        double y = detail::laplace_attn(x);
        REQUIRE(y > 0.0);
        REQUIRE(y < 1.0);
        REQUIRE(y > prev);
        prev = y;
    }
    for (double x = -40.0; x <= 40.0; x += 1.0) {
        double y = detail::laplace_attn(x);
        REQUIRE(y >= 0.0);
        REQUIRE(y <= 1.0);
    }
}

TEST_CASE("all-zero parameters map every input to zero") {
    GatedFusion fuse(small_cfg());
    // leave params at zero (gammas included)
    Rng rng(2), drop(0);
    Eigen::MatrixXd s = fdtest::random_like(4, 6, rng);
    Eigen::MatrixXd h = fdtest::random_like(4, 4, rng);
    Eigen::MatrixXd g = fdtest::random_like(4, 4, rng);
    auto f = fuse.forward(s, h, g, false, false, drop);
    REQUIRE(f.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a constant sequence collapses to the single-position output") {
    // same-width modalities with tied projections: 3-position and 2-position
    // runs must produce the same fused vector
    FusionConfig cfg3 = small_cfg();
    cfg3.s_dim = cfg3.h_dim = cfg3.g_dim = 5;
    FusionConfig cfg2 = cfg3;
    cfg2.use_global = false;
    GatedFusion f3(cfg3), f2(cfg2);
    f3.init(5);
    f2.init(5);
    // tie every projection to proj_s
    auto tie = [](GatedFusion& f) {
        auto ps = f.params();
        for (std::size_t i = 0; i < ps.size(); ++i) {
            if (ps[i]->name == "gau.proj_h.w" || ps[i]->name == "gau.proj_g.w")
                ps[i]->v = ps[0]->v;  // proj_s.w is first
            if (ps[i]->name == "gau.proj_h.b" || ps[i]->name == "gau.proj_g.b")
                ps[i]->v = ps[1]->v;
        }
    };
    tie(f3);
    tie(f2);
    Rng rng(9), drop(0);
    Eigen::MatrixXd x = fdtest::random_like(3, 5, rng);
    auto out3 = f3.forward(x, x, x, false, false, drop);
    auto out2 = f2.forward(x, x, x, false, false, drop);
    REQUIRE((out3 - out2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("distinct projections make the modality order matter") {
    FusionConfig cfg = small_cfg();
    cfg.s_dim = cfg.h_dim = cfg.g_dim = 5;
    GatedFusion fuse(cfg);
    fuse.init(21);
    Rng rng(3), drop(0);
    Eigen::MatrixXd a = fdtest::random_like(3, 5, rng);
    Eigen::MatrixXd b = fdtest::random_like(3, 5, rng);
    Eigen::MatrixXd c = fdtest::random_like(3, 5, rng);
    auto f_abc = fuse.forward(a, b, c, false, false, drop);
    auto f_bac = fuse.forward(b, a, c, false, false, drop);
    REQUIRE((f_abc - f_bac).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("non-finite inputs are rejected") {
    GatedFusion fuse(small_cfg());
    fuse.init(1);
    Rng drop(0);
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 6);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 4);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2, 4);
    s(1, 3) = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(fuse.forward(s, h, g, false, false, drop), NumericError);
}

TEST_CASE("fusion gradients match central finite differences") {
    Rng rng(11);
    for (bool use_gau : {true, false}) {
        for (bool use_global : {true, false}) {
            GatedFusion fuse(small_cfg(use_gau, use_global));
            fuse.init(77);
            Rng drop(0);
            Eigen::MatrixXd s = fdtest::random_like(4, 6, rng, 0.6);
            Eigen::MatrixXd h = fdtest::random_like(4, 4, rng, 0.6);
            Eigen::MatrixXd g = fdtest::random_like(4, 4, rng, 0.6);
            Eigen::MatrixXd probe = fdtest::random_like(4, 8, rng);

            auto loss = [&]() {
                return fuse.forward(s, h, g, false, false, drop).cwiseProduct(probe).sum();
            };
            for (Param* p : fuse.params()) p->zero_grad();
            fuse.forward(s, h, g, false, true, drop);
            auto grads = fuse.backward(probe);
            auto rep = fdtest::check_param_grads(fuse.params(), loss, rng, 5);
            INFO("gau=" << use_gau << " global=" << use_global << " err " << rep.max_rel_err);
            REQUIRE(rep.max_rel_err < 1e-4);
            REQUIRE(fdtest::check_input_grads(s, grads.ds, loss, rng, 8).max_rel_err < 1e-4);
            REQUIRE(fdtest::check_input_grads(h, grads.dh, loss, rng, 8).max_rel_err < 1e-4);
            if (use_global)
                REQUIRE(fdtest::check_input_grads(g, grads.dg, loss, rng, 8).max_rel_err < 1e-4);
        }
    }
}

TEST_CASE("classifier head follows the stated decision rule") {
    auto p = ClassifierHead::softmax(0.0, 1.0);
    REQUIRE(ClassifierHead::predict(0.0, 1.0) == 1);
    REQUIRE(p[1] == Catch::Approx(0.7310585786).margin(1e-9));
    REQUIRE(ClassifierHead::predict(0.0, 0.0) == 0);  // exact tie stays cover
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        double a = 3.0 * normal01(rng), b = 3.0 * normal01(rng);
        auto q = ClassifierHead::softmax(a, b);
        REQUIRE(std::abs(q.sum() - 1.0) < 1e-12);
        REQUIRE(ClassifierHead::predict(a + 5.0, b + 5.0) ==
                ClassifierHead::predict(a, b));  // shift invariance
    }
}
