#pragma once

#include <filesystem>
#include <string>

#include "dsrefine/dataset.hpp"
#include "dsrefine/refine.hpp"
#include "dsrefine/scores.hpp"
#include "dsrefine/trainer.hpp"

namespace dsrefine {

/// Nine significant digits, "nan"/"inf"/"-inf" for non-finite values.
std::string format_number(double v);

/// index,subject_id,label,score,metric_tag
std::string scores_csv(const Dataset& d, const ScoreVector& s);

/// fold,ratio,seed,accuracy,n_removed,recall,precision (rows in cell order)
std::string raw_csv(const ExperimentResult& r);

/// ratio,mean,std
std::string summary_csv(const ExperimentResult& r);

/// index,subject_id,label,score,noisy for every removed trial
std::string plan_csv(const Dataset& d, const RefinementPlan& plan, const ScoreVector* scores);

/// epoch,loss,lr
std::string loss_curve_csv(const TrainReport& report, const TrainConfig& cfg);

void write_text(const std::filesystem::path& path, const std::string& text);

/// Writes raw.csv, summary.csv and resolved_config.json into `dir` (created if needed),
/// plus experiment.json with the selected ratio and removal statistics.
void emit_report(const ExperimentResult& r, const std::filesystem::path& dir, const std::string& resolved_config_json);

}  // namespace dsrefine
