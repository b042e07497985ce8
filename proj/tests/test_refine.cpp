#include <doctest.h>

#include <cmath>
#include <vector>

#include "dsrefine/errors.hpp"
#include "dsrefine/parallel.hpp"
#include "dsrefine/refine.hpp"
#include "support.hpp"

using namespace dsrefine;

namespace {

Dataset toy(std::size_t n) {
    Dataset d;
    d.n_channels = 1;
    d.n_timepoints = 2;
    d.n_classes = 2;
    for (std::size_t i = 0; i < n; ++i)
        d.trials.push_back({{static_cast<float>(i), 1.0f}, static_cast<std::uint32_t>(i % 2), 0});
    return d;
}

ScoreVector scores(std::vector<double> v) { return {std::move(v), MetricTag::Influence}; }

Dataset small_benchmark(std::uint32_t subjects = 3) {
    SyntheticSpec s;
    s.n_subjects = subjects;
    s.trials_per_subject = 20;
    s.n_channels = 2;
    s.n_timepoints = 8;
    s.seed = 21;
    return inject_label_noise(generate_synthetic(s), 0.2, 22);
}

PipelineConfig quick_config(MetricKind kind) {
    PipelineConfig cfg;
    cfg.model.weight_decay = 1e-2;
    if (kind == MetricKind::McDropout) {
        cfg.model.arch = Arch::MlpDropout;
        cfg.model.hidden_dim = 6;
        cfg.metric.mc.T = 10;
    }
    cfg.metric.kind = kind;
    cfg.train.epochs = 15;
    cfg.train.warmup_epochs = 2;
    cfg.train.lr_peak = 1e-2;
    cfg.train.batch_size = 16;
    cfg.seeds = {0, 1};
    cfg.ratios = {0.0, 0.2};
    return cfg;
}

}  // namespace

TEST_CASE("refine_dataset examples") {
    const Dataset d = toy(4);
    auto [kept, plan] = refine_dataset(d, scores({0.1, 0.9, 0.5, 0.3}), 0.25);
    CHECK(plan.removed_indices == std::vector<std::size_t>{1});
    CHECK(plan.threshold == 0.9);
    CHECK(kept.size() == 3);
    CHECK(kept.trials[0] == d.trials[0]);
    CHECK(kept.trials[1] == d.trials[2]);
    CHECK(kept.trials[2] == d.trials[3]);

    auto [all, none] = refine_dataset(d, scores({0.1, 0.9, 0.5, 0.3}), 0.0);
    CHECK(none.removed_indices.empty());
    CHECK(std::isinf(none.threshold));
    CHECK(all == d);

    auto [k2, tied] = refine_dataset(d, scores({1, 1, 1, 1}), 0.5);
    CHECK(tied.removed_indices == std::vector<std::size_t>{0, 1});

    CHECK_THROWS_AS(refine_dataset(d, scores({1, 2}), 0.25), InvalidArgument);
    CHECK_THROWS_AS(refine_dataset(d, scores({1, 2, 3, 4}), 1.0), InvalidArgument);
    CHECK_THROWS_AS(refine_dataset(d, scores({1, 2, 3, 4}), -0.1), InvalidArgument);
}

TEST_CASE("refine_dataset invariants on random scores") {
    const Dataset d = toy(57);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> coarse(0, 9);  // coarse values force ties
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> v(57);
        for (auto& x : v) x = coarse(rng);
        const double ratio = 0.05 * rep;
        auto [kept, plan] = refine_dataset(d, scores(v), ratio);
        CHECK(plan.removed_indices.size() == static_cast<std::size_t>(std::llround(ratio * 57)));
        CHECK(kept.size() + plan.removed_indices.size() == 57);
        double min_removed = INFINITY, max_kept = -INFINITY;
        std::vector<bool> removed(57, false);
        for (auto i : plan.removed_indices) {
            removed[i] = true;
            min_removed = std::min(min_removed, v[i]);
        }
        for (std::size_t i = 0; i < 57; ++i)
            if (!removed[i]) max_kept = std::max(max_kept, v[i]);
        CHECK(min_removed >= max_kept);
        // Among trials tied at the threshold, lower indices go first.
        for (std::size_t i = 0; i < 57; ++i)
            for (std::size_t j = i + 1; j < 57; ++j)
                if (v[i] == v[j] && removed[j]) CHECK(removed[i]);
        // Kept order is the original order.
        for (std::size_t k = 1; k < kept.size(); ++k) CHECK(kept.trials[k - 1].data[0] < kept.trials[k].data[0]);
        CHECK(apply_plan(d, plan) == kept);
    }
}

TEST_CASE("random_dropout") {
    const Dataset d = toy(20);
    auto [same, p0] = random_dropout(d, 0.0, 5);
    CHECK(same == d);
    CHECK(p0.metric_tag == MetricTag::Random);
    CHECK(random_dropout(d, 0.3, 5).second.removed_indices == random_dropout(d, 0.3, 5).second.removed_indices);
    CHECK_THROWS_AS(random_dropout(d, 1.2, 5), InvalidArgument);

    std::vector<int> hits(20, 0);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto plan = random_dropout(d, 0.3, seed).second;
        CHECK(plan.removed_indices.size() == 6);
        for (auto i : plan.removed_indices) ++hits[i];
    }
    for (int h : hits) CHECK(std::abs(h / 1000.0 - 0.3) <= 0.05);
}

TEST_CASE("removal quality") {
    RefinementPlan plan;
    plan.removed_indices = {0, 2, 3};
    const std::vector<std::uint8_t> mask{1, 1, 0, 1, 0};
    const auto q = removal_quality(plan, mask);
    CHECK(q.precision == doctest::Approx(2.0 / 3.0));
    CHECK(q.recall == doctest::Approx(2.0 / 3.0));
    plan.removed_indices.clear();
    CHECK(std::isnan(removal_quality(plan, mask).precision));
    CHECK(removal_quality(plan, mask).recall == 0.0);
}

TEST_CASE("run_fold: ratio 0 is the plain baseline, reruns are identical") {
    const Dataset d = ems_standardize(small_benchmark(), EmsConfig{});
    auto [train_d, test_d] = split_loso(d, d.subjects().front());
    for (auto kind : {MetricKind::Influence, MetricKind::McDropout, MetricKind::Random}) {
        const PipelineConfig cfg = quick_config(kind);
        const ModelSpec spec = resolve_model(cfg.model, train_d);
        TrainConfig tc = cfg.train;
        tc.seed = 3;
        const double baseline = evaluate(spec, train(spec, train_d, tc).theta, test_d);
        CHECK(run_fold(train_d, test_d, cfg, 0.0, 3).accuracy == baseline);

        const FoldOutcome a = run_fold(train_d, test_d, cfg, 0.2, 3);
        const FoldOutcome b = run_fold(train_d, test_d, cfg, 0.2, 3);
        CHECK(a.accuracy == b.accuracy);
        CHECK(a.theta == b.theta);
        CHECK(a.plan.removed_indices == b.plan.removed_indices);
        CHECK(a.n_removed == static_cast<std::size_t>(std::llround(0.2 * train_d.size())));
        CHECK(std::isfinite(a.recall));

        // The shared-stage path agrees with independent single-ratio runs.
        const double both[] = {0.0, 0.2};
        const auto many = run_fold_ratios(train_d, test_d, cfg, both, 3);
        CHECK(many[0].accuracy == baseline);
        CHECK(many[1].accuracy == a.accuracy);
    }
    Dataset empty = train_d.subset(std::vector<std::size_t>{});
    CHECK_THROWS_AS(run_fold(empty, test_d, quick_config(MetricKind::Influence), 0.0, 0), InvalidArgument);

    auto cfg = quick_config(MetricKind::Influence);
    CHECK_THROWS_AS(run_fold(train_d.subset(std::vector<std::size_t>{0}), test_d, cfg, 0.6, 0), InvalidArgument);
}

TEST_CASE("mc-dropout pipeline requires a dropout model") {
    PipelineConfig cfg = quick_config(MetricKind::McDropout);
    cfg.model.arch = Arch::LinearSoftmax;
    CHECK_THROWS_AS(cfg.validate(), UnsupportedArchitecture);
}

TEST_CASE("grid_search: summary consistency and determinism") {
    const Dataset d = small_benchmark();
    const PipelineConfig cfg = quick_config(MetricKind::Influence);
    set_num_threads(1);
    const ExperimentResult r = grid_search(cfg, d);
    set_num_threads(4);
    const ExperimentResult r4 = grid_search(cfg, d);
    set_num_threads(0);

    REQUIRE(r.cells.size() == 3 * 2 * 2);
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
        CHECK(r.cells[i].accuracy == r4.cells[i].accuracy);
        CHECK(r.cells[i].n_removed == r4.cells[i].n_removed);
    }
    for (std::size_t i = 1; i < r.cells.size(); ++i) {
        const auto& a = r.cells[i - 1];
        const auto& b = r.cells[i];
        CHECK(std::tie(a.fold, a.ratio, a.seed) < std::tie(b.fold, b.ratio, b.seed));
    }
    REQUIRE(r.summary.size() == 2);
    double best = -1;
    for (const auto& s : r.summary) {
        double sum = 0, sq = 0;
        std::size_t n = 0;
        for (const auto& c : r.cells)
            if (c.ratio == s.ratio) {
                sum += c.accuracy;
                ++n;
            }
        const double mean = sum / n;
        for (const auto& c : r.cells)
            if (c.ratio == s.ratio) sq += (c.accuracy - mean) * (c.accuracy - mean);
        CHECK(n == s.count);
        CHECK(std::abs(s.mean - mean) <= 1e-12);
        CHECK(std::abs(s.std - std::sqrt(sq / n)) <= 1e-12);
        best = std::max(best, mean);
    }
    for (const auto& s : r.summary)
        if (s.ratio == r.best_ratio) CHECK(s.mean == best);
}

TEST_CASE("grid_search: single-ratio grid is the plain LOSO baseline") {
    const Dataset d = small_benchmark();
    PipelineConfig cfg = quick_config(MetricKind::Influence);
    cfg.ratios = {0.0};
    cfg.seeds = {5};
    const ExperimentResult r = grid_search(cfg, d);
    const Dataset pre = ems_standardize(d, cfg.ems);
    REQUIRE(r.cells.size() == 3);
    const ModelSpec spec = resolve_model(cfg.model, pre);
    TrainConfig tc = cfg.train;
    tc.seed = 5;
    for (const auto& c : r.cells) {
        auto [train_d, test_d] = split_loso(pre, c.fold);
        CHECK(c.accuracy == evaluate(spec, train(spec, train_d, tc).theta, test_d));
        CHECK(c.n_removed == 0);
    }
    CHECK(r.best_ratio == 0.0);

    CHECK_THROWS_AS(grid_search(cfg, split_loso(d, 0).second), InvalidArgument);
}

TEST_CASE("summarize: ties go to the smaller ratio, empty grid is NaN") {
    ExperimentResult r;
    r.cells = {{0, 0.1, 0, 0.5, 0, 0, 0}, {0, 0.3, 0, 0.5, 0, 0, 0}, {0, 0.2, 0, 0.4, 0, 0, 0}};
    summarize(r);
    CHECK(r.best_ratio == 0.1);
    ExperimentResult empty;
    summarize(empty);
    CHECK(std::isnan(empty.best_ratio));
    CHECK(empty.summary.empty());
}
