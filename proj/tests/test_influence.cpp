#include <doctest.h>

#include <cmath>

#include "dsrefine/errors.hpp"
#include "dsrefine/influence.hpp"
#include "dsrefine/parallel.hpp"
#include "dsrefine/trainer.hpp"
#include "support.hpp"

using namespace dsrefine;
using testing::blobs;
using testing::linear_spec;
using testing::mlp_spec;
using testing::random_theta;
using testing::random_vector;

namespace {

InfluenceConfig cg_only(double damping = 1e-2) {
    InfluenceConfig c;
    c.damping = damping;
    c.use_dense_if_P_leq = 0;
    return c;
}

// Damping that makes H + dI comfortably positive definite; mlp Hessians away from a
// minimum are indefinite.
double pd_damping(const ModelSpec& spec, const ParamVector& theta, const Samples& s) {
    const double lo = Eigen::SelfAdjointEigenSolver<Matrix>(exact_hessian(spec, theta, s, 0.0)).eigenvalues().minCoeff();
    return std::max(1e-2, 1.0 - lo);
}

Samples duplicate_first(const Samples& s) {
    Samples out = s;
    out.X.conservativeResize(Eigen::NoChange, s.X.cols() + 1);
    out.X.col(s.X.cols()) = s.X.col(0);
    out.y.push_back(s.y[0]);
    return out;
}

}  // namespace

TEST_CASE("pure damping solve returns v / delta") {
    const auto spec = linear_spec(3, 2, 0.0);
    Samples empty;
    empty.n_classes = 2;
    empty.X.resize(3, 0);
    const ParamVector v = random_vector(8, 1);
    InfluenceConfig cfg;
    cfg.damping = 0.3;
    const auto r = solve_hinv_v(spec, random_theta(spec, 1), empty, v, cfg);
    CHECK((r.u.array() == (v / 0.3).array()).all());
}

TEST_CASE("zero right-hand side") {
    const Samples s = blobs(10, 3, 2, 1.0, 1);
    const auto spec = linear_spec(3, 2, 1e-2);
    for (const auto& cfg : {InfluenceConfig{}, cg_only()}) {
        const auto r = solve_hinv_v(spec, random_theta(spec, 2), s, ParamVector::Zero(8), cfg);
        CHECK(r.u.isZero(0.0));
        CHECK(r.iterations == 0);
    }
}

TEST_CASE("CG agrees with the dense inverse") {
    const Samples s = blobs(40, 6, 3, 1.0, 3);
    for (const auto& spec : {linear_spec(6, 3, 1e-2), mlp_spec(6, 8, 3, 1e-2)}) {
        REQUIRE(spec.param_count() <= 200);
        const ParamVector theta = random_theta(spec, 4);
        const double delta = pd_damping(spec, theta, s);
        const Matrix H = exact_hessian(spec, theta, s, delta);
        const HessianSolver cg(spec, theta, s, cg_only(delta));
        InfluenceConfig dense_cfg;
        dense_cfg.damping = delta;
        const HessianSolver dense(spec, theta, s, dense_cfg);
        CHECK_FALSE(cg.dense());
        CHECK(dense.dense());
        for (unsigned k = 0; k < 4; ++k) {
            const ParamVector v = random_vector(theta.size(), 10 + k);
            const ParamVector want = H.llt().solve(v);
            const auto r = cg.solve(v);
            CHECK((r.u - want).norm() / want.norm() <= 1e-6);
            CHECK(r.relative_residual <= 1e-8);
            CHECK(r.iterations > 0);
            CHECK((dense.solve(v).u - want).norm() / want.norm() <= 1e-6);
        }
        const Matrix V = Matrix::NullaryExpr(theta.size(), 3, [] { return 0.5; }) + H.leftCols(3);
        const Matrix U = cg.solve_many(V);
        for (Eigen::Index j = 0; j < 3; ++j) CHECK(U.col(j) == cg.solve(V.col(j)).u);
    }
}

TEST_CASE("CG reports non-convergence with its residual") {
    const Samples s = blobs(40, 6, 3, 1.0, 5);
    const auto spec = linear_spec(6, 3, 0.0);
    InfluenceConfig cfg = cg_only(1e-4);
    cfg.cg_max_iters = 2;
    try {
        (void)solve_hinv_v(spec, random_theta(spec, 6), s, random_vector(21, 7), cfg);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.residual() > cfg.cg_tol);
        CHECK(e.iterations() == 2);
    }
}

TEST_CASE("total-train scores vanish at the exact minimiser") {
    const Samples s = blobs(50, 3, 2, 1.0, 8);
    const auto spec = linear_spec(3, 2, 1e-2);
    TrainConfig tc;
    tc.optimizer = Optimizer::Newton;
    tc.epochs = 100;
    tc.grad_tol = 1e-8;
    const auto r = train(spec, s, tc);
    REQUIRE(r.final_grad_norm <= 1e-8);
    InfluenceConfig cfg;
    cfg.mode = InfluenceMode::TotalTrain;
    const auto sv = influence_scores(spec, r.theta, s, cfg);
    for (double v : sv.scores) CHECK(std::abs(v) <= 1e-6 * 50);

    // Away from the minimiser they do not.
    const auto far = influence_scores(spec, random_theta(spec, 1), s, cfg);
    double biggest = 0;
    for (double v : far.scores) biggest = std::max(biggest, std::abs(v));
    CHECK(biggest > 1e-3);
}

TEST_CASE("duplicated trials score identically in every mode") {
    const Samples base = blobs(25, 4, 3, 1.0, 9);
    const Samples s = duplicate_first(base);
    const Samples ref = blobs(6, 4, 3, 1.0, 19);
    for (const auto& spec : {linear_spec(4, 3, 1e-2), mlp_spec(4, 5, 3, 1e-2)}) {
        const ParamVector theta = random_theta(spec, 10);
        const double delta = pd_damping(spec, theta, s);
        for (auto mode : {InfluenceMode::TotalTrain, InfluenceMode::Self, InfluenceMode::ReferenceSet}) {
            for (auto cfg : {InfluenceConfig{}, cg_only(delta)}) {
                cfg.damping = delta;
                cfg.mode = mode;
                const auto sv = influence_scores(spec, theta, s, cfg, &ref);
                INFO(to_string(spec.arch), " ", to_string(mode), " dense ", cfg.use_dense_if_P_leq);
                CHECK(sv.scores.front() == sv.scores.back());
                CHECK(sv.metric_tag == MetricTag::Influence);
            }
        }
    }
}

TEST_CASE("self and reference-set scores match direct formulas") {
    const Samples s = blobs(20, 3, 2, 1.0, 11);
    const Samples ref = blobs(5, 3, 2, 1.0, 12);
    const auto spec = mlp_spec(3, 4, 2, 1e-2);
    const ParamVector theta = random_theta(spec, 13);
    const Matrix Hinv = exact_hessian(spec, theta, s, 1e-3).inverse();
    const bool pd = Eigen::LLT<Matrix>(exact_hessian(spec, theta, s, 1e-3)).info() == Eigen::Success;
    const Matrix G = per_sample_grads(spec, theta, s);
    const ParamVector gref = per_sample_grads(spec, theta, ref).rowwise().sum();

    InfluenceConfig cfg;
    cfg.mode = InfluenceMode::Self;
    const auto self = influence_scores(spec, theta, s, cfg);
    cfg.mode = InfluenceMode::ReferenceSet;
    const auto rs = influence_scores(spec, theta, s, cfg, &ref);
    for (Eigen::Index i = 0; i < G.cols(); ++i) {
        const double want_self = G.col(i).dot(Hinv * G.col(i));
        const double want_ref = gref.dot(Hinv * G.col(i));
        CHECK(self.scores[i] == doctest::Approx(want_self).epsilon(1e-8));
        if (pd) CHECK(self.scores[i] >= 0.0);
        CHECK(std::abs(rs.scores[i] - want_ref) <= 1e-8 * (1 + std::abs(want_ref)));
    }
    CHECK_THROWS_AS(influence_scores(spec, theta, s, cfg), InvalidArgument);
}

TEST_CASE("influence scores do not depend on the thread count") {
    const Samples s = blobs(60, 5, 2, 1.0, 14);
    const auto spec = mlp_spec(5, 6, 2, 1e-2);
    const ParamVector theta = random_theta(spec, 15);
    InfluenceConfig cfg = cg_only(pd_damping(spec, theta, s));
    cfg.mode = InfluenceMode::Self;
    set_num_threads(1);
    const auto one = influence_scores(spec, theta, s, cfg);
    set_num_threads(4);
    const auto four = influence_scores(spec, theta, s, cfg);
    set_num_threads(0);
    CHECK(one.scores == four.scores);
}

TEST_CASE("influence config parsing and validation") {
    CHECK(parse_influence_mode("self") == InfluenceMode::Self);
    CHECK(to_string(InfluenceMode::ReferenceSet) == "reference-set");
    CHECK_THROWS_AS(parse_influence_mode("loo"), InvalidArgument);
    InfluenceConfig c;
    c.damping = 0.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    CHECK(InfluenceConfig{}.max_iters_for(50) == 500);
    CHECK(InfluenceConfig{}.max_iters_for(5000) == 10000);
}

TEST_CASE("self-influence is non-negative for a convex model") {
    const Samples s = blobs(30, 4, 3, 1.0, 16);
    const auto spec = linear_spec(4, 3, 1e-3);
    InfluenceConfig cfg;
    cfg.mode = InfluenceMode::Self;
    for (double v : influence_scores(spec, random_theta(spec, 17), s, cfg).scores) CHECK(v > 0.0);
}
