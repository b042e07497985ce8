#include <doctest.h>

#include <vector>

#include "dsrefine/errors.hpp"
#include "dsrefine/parallel.hpp"
#include "dsrefine/uncertainty.hpp"
#include "support.hpp"

using namespace dsrefine;
using testing::blobs;
using testing::linear_spec;
using testing::mlp_spec;
using testing::random_theta;

TEST_CASE("bernoulli variance arithmetic") {
    const std::vector<double> half(7, 0.5);
    CHECK(bernoulli_variance_mean(half) == 0.25);
    const std::vector<double> mixed{1.0, 0.5};
    CHECK(bernoulli_variance_mean(mixed) == 0.125);
    const std::vector<double> sure{1.0, 0.0, 1.0};
    CHECK(bernoulli_variance_mean(sure) == 0.0);
    CHECK_THROWS_AS(bernoulli_variance_mean(std::span<const double>{}), InvalidArgument);
}

TEST_CASE("mc-dropout scores lie in [0, 0.25]") {
    const Samples s = blobs(40, 4, 3, 1.0, 1);
    const auto spec = mlp_spec(4, 8, 3, 0.0, 0.5);
    const ParamVector theta = random_theta(spec, 2, 2.0);
    for (auto conf : {Confidence::TrueLabel, Confidence::MaxClass}) {
        McConfig cfg;
        cfg.confidence = conf;
        const auto sv = mc_dropout_scores(spec, theta, s, cfg);
        REQUIRE(sv.size() == 40);
        CHECK(sv.metric_tag == MetricTag::McDropout);
        for (double v : sv.scores) {
            CHECK(v >= 0.0);
            CHECK(v <= 0.25);
        }
    }
}

TEST_CASE("zero dropout gives p - p^2 for every seed") {
    const Samples s = blobs(15, 3, 2, 1.0, 3);
    const auto spec = mlp_spec(3, 5, 2, 0.0, 0.0);
    const ParamVector theta = random_theta(spec, 4);
    const Matrix P = predict_proba(spec, theta, s);
    McConfig cfg;
    cfg.T = 7;
    const auto a = mc_dropout_scores(spec, theta, s, cfg);
    cfg.seed = 99;
    const auto b = mc_dropout_scores(spec, theta, s, cfg);
    CHECK(a.scores == b.scores);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double p = P(s.y[i], static_cast<Eigen::Index>(i));
        CHECK(a.scores[i] == p - p * p);
    }

    // An override turns dropout on for a model trained without it.
    cfg.dropout_rate_override = 0.5;
    CHECK(mc_dropout_scores(spec, theta, s, cfg).scores != a.scores);
}

TEST_CASE("mc-dropout determinism and errors") {
    const Samples s = blobs(20, 3, 2, 1.0, 5);
    const auto spec = mlp_spec(3, 6, 2, 0.0, 0.3);
    const ParamVector theta = random_theta(spec, 6, 1.5);
    McConfig cfg;
    cfg.seed = 3;
    set_num_threads(1);
    const auto a = mc_dropout_scores(spec, theta, s, cfg);
    set_num_threads(3);
    const auto b = mc_dropout_scores(spec, theta, s, cfg);
    set_num_threads(0);
    CHECK(a.scores == b.scores);
    cfg.seed = 4;
    CHECK(mc_dropout_scores(spec, theta, s, cfg).scores != a.scores);

    cfg.T = 0;
    CHECK_THROWS_AS(mc_dropout_scores(spec, theta, s, cfg), InvalidArgument);
    const auto lin = linear_spec(3, 2);
    CHECK_THROWS_AS(mc_dropout_scores(lin, random_theta(lin, 1), s, McConfig{}), UnsupportedArchitecture);
    CHECK(parse_confidence("max-class") == Confidence::MaxClass);
}
