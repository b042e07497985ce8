#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dsrefine/dataset.hpp"
#include "dsrefine/influence.hpp"
#include "dsrefine/model.hpp"
#include "dsrefine/scores.hpp"
#include "dsrefine/trainer.hpp"
#include "dsrefine/uncertainty.hpp"

namespace dsrefine {

/// Which trials get removed at a given ratio.
struct RefinementPlan {
    double ratio = 0.0;
    /// Smallest removed score; +inf when nothing was removed, NaN for random plans.
    double threshold = 0.0;
    std::vector<std::size_t> removed_indices;  ///< sorted ascending
    MetricTag metric_tag = MetricTag::Influence;
};

/// Removes the round(ratio * n) highest-scoring trials (lower index first among ties).
/// Kept trials stay in their original order.
std::pair<Dataset, RefinementPlan> refine_dataset(const Dataset& d, const ScoreVector& s, double ratio);

/// Control: removes round(ratio * n) trials chosen uniformly without replacement.
std::pair<Dataset, RefinementPlan> random_dropout(const Dataset& d, double ratio, std::uint64_t seed);

/// Trials of `d` not removed by `plan`, in original order. `d` must have the plan's source length.
Dataset apply_plan(const Dataset& d, const RefinementPlan& plan);

/// Precision/recall of a plan against a ground-truth noise mask. NaN where undefined
/// (precision with nothing removed, recall with no noisy trials).
struct RemovalQuality {
    double precision = 0.0;
    double recall = 0.0;
};

RemovalQuality removal_quality(const RefinementPlan& plan, std::span<const std::uint8_t> noise_mask);

enum class MetricKind { Influence, McDropout, Random };

std::string_view to_string(MetricKind kind);
MetricKind parse_metric_kind(std::string_view name);

struct ScoringMetric {
    MetricKind kind = MetricKind::Influence;
    InfluenceConfig influence = [] {
        InfluenceConfig c;
        c.mode = InfluenceMode::Self;
        return c;
    }();
    McConfig mc;
};

struct PipelineConfig {
    /// input_dim and n_classes are taken from the data when left at 0.
    ModelSpec model;
    TrainConfig train;
    ScoringMetric metric;
    std::vector<double> ratios{0.0, 0.1, 0.2, 0.3, 0.4};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    bool apply_ems = true;
    EmsConfig ems;

    void validate() const;
};

/// Model spec completed with the data's input dimension and class count.
ModelSpec resolve_model(const ModelSpec& spec, const Dataset& d);

/// Stage II scores of `train_d` under a trained theta.
ScoreVector compute_scores(const ModelSpec& spec, const ParamVector& theta, const Samples& train,
                           const ScoringMetric& metric, std::uint64_t seed);

struct FoldOutcome {
    double ratio = 0.0;
    double accuracy = 0.0;
    std::size_t n_removed = 0;
    double recall = 0.0;     ///< NaN without a noise mask
    double precision = 0.0;  ///< NaN without a noise mask
    RefinementPlan plan;
    ParamVector theta;  ///< final (retrained) parameters
};

/// Train -> score -> prune at `ratio` -> retrain from the same seed -> test accuracy.
/// Data must already be preprocessed. ratio 0 is the plain baseline.
FoldOutcome run_fold(const Dataset& train_d, const Dataset& test_d, const PipelineConfig& cfg, double ratio,
                     std::uint64_t seed);

/// run_fold for several ratios sharing one Stage I model and score vector.
std::vector<FoldOutcome> run_fold_ratios(const Dataset& train_d, const Dataset& test_d, const PipelineConfig& cfg,
                                         std::span<const double> ratios, std::uint64_t seed);

struct ExperimentCell {
    std::uint32_t fold = 0;  ///< held-out subject id
    double ratio = 0.0;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    std::size_t n_removed = 0;
    double recall = 0.0;
    double precision = 0.0;
};

struct RatioSummary {
    double ratio = 0.0;
    double mean = 0.0;
    double std = 0.0;  ///< population standard deviation over folds x seeds
    std::size_t count = 0;
};

struct ExperimentResult {
    MetricTag metric_tag = MetricTag::Influence;
    std::vector<ExperimentCell> cells;  ///< sorted by (fold, ratio, seed)
    std::vector<RatioSummary> summary;  ///< ascending ratio
    double best_ratio = 0.0;            ///< NaN for an empty grid
};

/// Mean/std per ratio and the best ratio (highest mean, smaller ratio on ties).
void summarize(ExperimentResult& r);

/// Leave-one-subject-out sweep over ratios x seeds. Applies EMS first when cfg.apply_ems.
ExperimentResult grid_search(const PipelineConfig& cfg, const Dataset& d);

}  // namespace dsrefine
