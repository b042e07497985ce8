#include "dsrefine/refine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <tuple>

#include "dsrefine/errors.hpp"
#include "dsrefine/parallel.hpp"
#include "dsrefine/rng.hpp"

namespace dsrefine {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t removal_count(double ratio, std::size_t n) {
    return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
}

void check_ratio(double ratio) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw InvalidArgument("refinement ratio must lie in [0, 1)");
}

Dataset keep_complement(const Dataset& d, const std::vector<std::size_t>& removed_sorted) {
    std::vector<std::size_t> kept;
    kept.reserve(d.size() - removed_sorted.size());
    auto it = removed_sorted.begin();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (it != removed_sorted.end() && *it == i) {
            ++it;
            continue;
        }
        kept.push_back(i);
    }
    return d.subset(kept);
}

}  // namespace

std::pair<Dataset, RefinementPlan> refine_dataset(const Dataset& d, const ScoreVector& s, double ratio) {
    check_ratio(ratio);
    if (s.size() != d.size())
        throw InvalidArgument("score vector has " + std::to_string(s.size()) + " entries for " +
                              std::to_string(d.size()) + " trials");
    for (double v : s.scores)
        if (!std::isfinite(v)) throw NumericalError("score vector contains NaN/Inf");

    const std::size_t k = removal_count(ratio, d.size());
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });

    RefinementPlan plan;
    plan.ratio = ratio;
    plan.metric_tag = s.metric_tag;
    plan.removed_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    plan.threshold = k == 0 ? std::numeric_limits<double>::infinity() : s.scores[order[k - 1]];
    std::sort(plan.removed_indices.begin(), plan.removed_indices.end());
    return {keep_complement(d, plan.removed_indices), std::move(plan)};
}

std::pair<Dataset, RefinementPlan> random_dropout(const Dataset& d, double ratio, std::uint64_t seed) {
    check_ratio(ratio);
    const std::size_t k = removal_count(ratio, d.size());
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {stream::kRandomPrune}));
    std::shuffle(order.begin(), order.end(), rng);

    RefinementPlan plan;
    plan.ratio = ratio;
    plan.metric_tag = MetricTag::Random;
    plan.threshold = kNaN;
    plan.removed_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(plan.removed_indices.begin(), plan.removed_indices.end());
    return {keep_complement(d, plan.removed_indices), std::move(plan)};
}

Dataset apply_plan(const Dataset& d, const RefinementPlan& plan) {
    if (!plan.removed_indices.empty() && plan.removed_indices.back() >= d.size())
        throw InvalidArgument("plan removes an index beyond the dataset");
    return keep_complement(d, plan.removed_indices);
}

RemovalQuality removal_quality(const RefinementPlan& plan, std::span<const std::uint8_t> noise_mask) {
    std::size_t hits = 0;
    for (std::size_t i : plan.removed_indices) {
        if (i >= noise_mask.size()) throw InvalidArgument("plan index outside noise mask");
        hits += noise_mask[i] != 0;
    }
    const auto noisy = static_cast<std::size_t>(std::count_if(noise_mask.begin(), noise_mask.end(),
                                                              [](std::uint8_t m) { return m != 0; }));
    RemovalQuality q;
    q.precision = plan.removed_indices.empty() ? kNaN
                                               : static_cast<double>(hits) / static_cast<double>(plan.removed_indices.size());
    q.recall = noisy == 0 ? kNaN : static_cast<double>(hits) / static_cast<double>(noisy);
    return q;
}

std::string_view to_string(MetricKind kind) {
    switch (kind) {
        case MetricKind::Influence: return "influence";
        case MetricKind::McDropout: return "mc-dropout";
        case MetricKind::Random: return "random";
    }
    return "unknown";
}

MetricKind parse_metric_kind(std::string_view name) {
    if (name == "influence") return MetricKind::Influence;
    if (name == "mc-dropout" || name == "mcdropout") return MetricKind::McDropout;
    if (name == "random") return MetricKind::Random;
    throw InvalidArgument("unknown scoring metric '" + std::string(name) + "'");
}

void PipelineConfig::validate() const {
    train.validate();
    ems.validate();
    if (metric.kind == MetricKind::Influence) metric.influence.validate();
    if (metric.kind == MetricKind::McDropout) {
        metric.mc.validate();
        if (model.arch != Arch::MlpDropout)
            throw UnsupportedArchitecture("mc-dropout scoring needs the mlp-dropout architecture");
    }
    if (seeds.empty()) throw InvalidArgument("pipeline needs at least one seed");
    for (double r : ratios) check_ratio(r);
}

ModelSpec resolve_model(const ModelSpec& spec, const Dataset& d) {
    ModelSpec out = spec;
    if (out.input_dim == 0) out.input_dim = d.trial_length();
    if (out.n_classes == 0) out.n_classes = d.n_classes;
    if (out.input_dim != d.trial_length())
        throw InvalidArgument("model input_dim " + std::to_string(out.input_dim) + " does not match trial length " +
                              std::to_string(d.trial_length()));
    if (out.n_classes != d.n_classes) throw InvalidArgument("model n_classes does not match dataset");
    out.validate();
    return out;
}

ScoreVector compute_scores(const ModelSpec& spec, const ParamVector& theta, const Samples& train,
                           const ScoringMetric& metric, std::uint64_t seed) {
    switch (metric.kind) {
        case MetricKind::Influence: return influence_scores(spec, theta, train, metric.influence);
        case MetricKind::McDropout: {
            McConfig mc = metric.mc;
            mc.seed = derive_seed(seed, {stream::kMcDropout, metric.mc.seed});
            return mc_dropout_scores(spec, theta, train, mc);
        }
        case MetricKind::Random: break;
    }
    throw InvalidArgument("random metric has no scores");
}

std::vector<FoldOutcome> run_fold_ratios(const Dataset& train_d, const Dataset& test_d, const PipelineConfig& cfg,
                                         std::span<const double> ratios, std::uint64_t seed) {
    cfg.validate();
    if (train_d.empty()) throw InvalidArgument("training fold is empty");
    if (test_d.empty()) throw InvalidArgument("test fold is empty");
    const ModelSpec spec = resolve_model(cfg.model, train_d);
    TrainConfig tc = cfg.train;
    tc.seed = seed;

    const Samples train_s = to_samples(train_d);
    const Samples test_s = to_samples(test_d);

    // Stage I
    const TrainReport stage1 = train(spec, train_s, tc);
    const double baseline = evaluate(spec, stage1.theta, test_s);

    // Stage II, only if some ratio actually prunes by score
    const bool need_scores =
        cfg.metric.kind != MetricKind::Random && std::any_of(ratios.begin(), ratios.end(), [](double r) { return r > 0; });
    ScoreVector scores;
    if (need_scores) scores = compute_scores(spec, stage1.theta, train_s, cfg.metric, seed);

    std::vector<FoldOutcome> out;
    out.reserve(ratios.size());
    for (double ratio : ratios) {
        check_ratio(ratio);
        FoldOutcome fo;
        fo.ratio = ratio;
        fo.recall = kNaN;
        fo.precision = kNaN;
        if (ratio == 0.0) {
            fo.accuracy = baseline;
            fo.theta = stage1.theta;
            fo.plan.ratio = 0.0;
            fo.plan.threshold = std::numeric_limits<double>::infinity();
            fo.plan.metric_tag = cfg.metric.kind == MetricKind::Random ? MetricTag::Random : scores.metric_tag;
        } else {
            // Stage III
            auto [kept, plan] = cfg.metric.kind == MetricKind::Random ? random_dropout(train_d, ratio, seed)
                                                                       : refine_dataset(train_d, scores, ratio);
            if (kept.empty()) throw InvalidArgument("pruning removed every training trial");
            const TrainReport stage3 = train(spec, to_samples(kept), tc);
            fo.accuracy = evaluate(spec, stage3.theta, test_s);
            fo.theta = stage3.theta;
            fo.plan = std::move(plan);
        }
        fo.n_removed = fo.plan.removed_indices.size();
        if (train_d.noise_mask) {
            const RemovalQuality q = removal_quality(fo.plan, *train_d.noise_mask);
            fo.recall = q.recall;
            fo.precision = q.precision;
        }
        out.push_back(std::move(fo));
    }
    return out;
}

FoldOutcome run_fold(const Dataset& train_d, const Dataset& test_d, const PipelineConfig& cfg, double ratio,
                     std::uint64_t seed) {
    const double r[] = {ratio};
    return std::move(run_fold_ratios(train_d, test_d, cfg, r, seed).front());
}

void summarize(ExperimentResult& r) {
    std::vector<double> ratios;
    for (const auto& c : r.cells) ratios.push_back(c.ratio);
    std::sort(ratios.begin(), ratios.end());
    ratios.erase(std::unique(ratios.begin(), ratios.end()), ratios.end());

    r.summary.clear();
    r.best_ratio = kNaN;
    double best_mean = -1.0;
    for (double ratio : ratios) {
        RatioSummary s;
        s.ratio = ratio;
        double sum = 0.0;
        for (const auto& c : r.cells)
            if (c.ratio == ratio) {
                sum += c.accuracy;
                ++s.count;
            }
        s.mean = sum / static_cast<double>(s.count);
        double ss = 0.0;
        for (const auto& c : r.cells)
            if (c.ratio == ratio) ss += (c.accuracy - s.mean) * (c.accuracy - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(s.count));
        if (s.mean > best_mean) {
            best_mean = s.mean;
            r.best_ratio = ratio;
        }
        r.summary.push_back(s);
    }
}

ExperimentResult grid_search(const PipelineConfig& cfg, const Dataset& d) {
    cfg.validate();
    d.validate();
    const auto subjects = d.subjects();
    if (subjects.size() < 2) throw InvalidArgument("leave-one-subject-out needs at least two subjects");
    const Dataset data = cfg.apply_ems ? ems_standardize(d, cfg.ems) : d;

    std::vector<double> ratios = cfg.ratios;
    std::sort(ratios.begin(), ratios.end());
    ratios.erase(std::unique(ratios.begin(), ratios.end()), ratios.end());

    const std::size_t n_jobs = subjects.size() * cfg.seeds.size();
    std::vector<std::vector<ExperimentCell>> slots(ratios.empty() ? 0 : n_jobs);
    parallel_for(slots.size(), [&](std::size_t job) {
        const std::uint32_t fold = subjects[job / cfg.seeds.size()];
        const std::uint64_t seed = cfg.seeds[job % cfg.seeds.size()];
        const auto [train_d, test_d] = split_loso(data, fold);
        for (const auto& fo : run_fold_ratios(train_d, test_d, cfg, ratios, seed))
            slots[job].push_back({fold, fo.ratio, seed, fo.accuracy, fo.n_removed, fo.recall, fo.precision});
    });

    ExperimentResult r;
    r.metric_tag = cfg.metric.kind == MetricKind::Influence ? MetricTag::Influence
                   : cfg.metric.kind == MetricKind::McDropout ? MetricTag::McDropout
                                                              : MetricTag::Random;
    for (auto& s : slots) r.cells.insert(r.cells.end(), s.begin(), s.end());
    std::sort(r.cells.begin(), r.cells.end(), [](const ExperimentCell& a, const ExperimentCell& b) {
        return std::tie(a.fold, a.ratio, a.seed) < std::tie(b.fold, b.ratio, b.seed);
    });
    summarize(r);
    return r;
}

}  // namespace dsrefine
