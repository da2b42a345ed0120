#include <catch_amalgamated.hpp>

#include "fd_util.hpp"
#include "gsdfuse/gin.hpp"

using namespace gsdfuse;

TEST_CASE("sum aggregation by hand: (1)+(2)+(3) with eps 0 gives 6") {
    Eigen::MatrixXd h(3, 1);
    h << 1, 2, 3;
    auto agg = gin_aggregate(h, {{0, 1}, {0, 2}}, 0.0);
    REQUIRE(agg(0, 0) == 6.0);
    REQUIRE(agg(1, 0) == 3.0);  // own 2 + neighbour 1
    REQUIRE(agg(2, 0) == 4.0);
}

TEST_CASE("empty neighbourhood reduces to (1+eps) times the state") {
    Eigen::MatrixXd h(2, 3);
    h << 1, 2, 3, 4, 5, 6;
    auto agg = gin_aggregate(h, {}, 0.25);
    REQUIRE((agg - 1.25 * h).cwiseAbs().maxCoeff() < 1e-15);
    auto agg0 = gin_aggregate(h, {}, 0.0);
    REQUIRE((agg0 - h).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stack output equals a direct per-node evaluation") {
    GinConfig cfg;
    cfg.in_dim = 4;
    cfg.dim = 5;
    cfg.layers = 2;
    cfg.dropout = 0.0;
    GinStack gin(cfg);
    gin.init(13);
    Rng rng(3), drop(0);
    const int n = 6;
    Eigen::MatrixXd feats = fdtest::random_like(n, cfg.in_dim, rng);
    std::vector<std::pair<int, int>> edges{{0, 1}, {1, 2}, {3, 4}};
    Eigen::MatrixXd got = gin.forward(feats, edges, false, false, drop);

    // brute force: apply the published update node by node
    auto params = gin.params();  // [eps1,w1,b1,w2,b2, eps2,...]
    Eigen::MatrixXd h = feats;
    for (int layer = 0; layer < 2; ++layer) {
        double eps = params[static_cast<std::size_t>(5 * layer)]->v(0, 0);
        const auto& w1 = params[static_cast<std::size_t>(5 * layer + 1)]->v;
        const auto& b1 = params[static_cast<std::size_t>(5 * layer + 2)]->v;
        const auto& w2 = params[static_cast<std::size_t>(5 * layer + 3)]->v;
        const auto& b2 = params[static_cast<std::size_t>(5 * layer + 4)]->v;
        Eigen::MatrixXd next(n, w2.cols());
        for (int v = 0; v < n; ++v) {
            Eigen::RowVectorXd a = (1.0 + eps) * h.row(v);
            for (auto [x, y] : edges) {
                if (x == v) a += h.row(y);
                if (y == v) a += h.row(x);
            }
            Eigen::RowVectorXd z1 = a * w1 + b1.col(0).transpose();
            Eigen::RowVectorXd r1 = z1.cwiseMax(0.0);
            next.row(v) = r1 * w2 + b2.col(0).transpose();
        }
        h = next;
    }
    REQUIRE((got - h).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("component mean broadcasts and is permutation invariant") {
    ComponentMean pool;
    Eigen::MatrixXd h(4, 2);
    h << 1, 0, 3, 0, 10, 2, 5, 5;
    // nodes 0-1 joined; 2 and 3 isolated
    auto g = pool.forward(h, {{0, 1}});
    REQUIRE(g(0, 0) == 2.0);
    REQUIRE(g(1, 0) == 2.0);
    REQUIRE((g.row(2) - h.row(2)).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((g.row(3) - h.row(3)).cwiseAbs().maxCoeff() == 0.0);

    // permuting rows and the edge list permutes the output
    Eigen::MatrixXd hp(4, 2);
    std::vector<int> perm{2, 3, 1, 0};
    for (int i = 0; i < 4; ++i) hp.row(perm[static_cast<std::size_t>(i)]) = h.row(i);
    auto gp = pool.forward(hp, {{perm[0], perm[1]}});
    for (int i = 0; i < 4; ++i)
        REQUIRE((g.row(i) - gp.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff() ==
                0.0);
}

TEST_CASE("non-isomorphic trees with equal features separate after random init") {
    // path 0-1-2-3 versus star 0-1, 0-2, 0-3; identical constant node input
    GinConfig cfg;
    cfg.in_dim = 3;
    cfg.dim = 8;
    cfg.dropout = 0.0;
    Eigen::MatrixXd feats = Eigen::MatrixXd::Ones(4, 3);
    int separated = 0;
    for (int seed = 0; seed < 100; ++seed) {
        GinStack gin(cfg);
        gin.init(static_cast<std::uint64_t>(seed));
        ComponentMean pool;
        Rng drop(0);
        Eigen::MatrixXd path =
            pool.forward(gin.forward(feats, {{0, 1}, {1, 2}, {2, 3}}, false, false, drop),
                         {{0, 1}, {1, 2}, {2, 3}});
        Eigen::MatrixXd star =
            pool.forward(gin.forward(feats, {{0, 1}, {0, 2}, {0, 3}}, false, false, drop),
                         {{0, 1}, {0, 2}, {0, 3}});
        if ((path.row(0) - star.row(0)).cwiseAbs().maxCoeff() > 1e-9) ++separated;
    }
    REQUIRE(separated >= 99);
}

TEST_CASE("gin gradients match central finite differences") {
    Rng rng(7);
    for (int trial = 0; trial < 3; ++trial) {
        GinConfig cfg;
        cfg.in_dim = 3 + trial;
        cfg.dim = 6;
        cfg.dropout = 0.0;
        GinStack gin(cfg);
        gin.init(60 + static_cast<std::uint64_t>(trial));
        const int n = 5;
        Eigen::MatrixXd feats = fdtest::random_like(n, cfg.in_dim, rng, 0.7);
        std::vector<std::pair<int, int>> edges{{0, 1}, {1, 2}, {2, 3}};
        Eigen::MatrixXd probe = fdtest::random_like(n, cfg.dim, rng);
        ComponentMean pool;
        Rng drop(0);

        auto loss = [&]() {
            ComponentMean p2;
            return p2.forward(gin.forward(feats, edges, false, false, drop), edges)
                .cwiseProduct(probe)
                .sum();
        };
        for (Param* p : gin.params()) p->zero_grad();
        Eigen::MatrixXd gin_out = gin.forward(feats, edges, false, true, drop);
        pool.forward(gin_out, edges);
        Eigen::MatrixXd d_in = gin.backward(pool.backward(probe));
        auto rep = fdtest::check_param_grads(gin.params(), loss, rng, 6);
        INFO("param max rel err " << rep.max_rel_err);
        REQUIRE(rep.max_rel_err < 1e-4);
        auto rep_in = fdtest::check_input_grads(feats, d_in, loss, rng, 10);
        REQUIRE(rep_in.max_rel_err < 1e-4);
    }
}
