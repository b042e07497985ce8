#include "dsrefine/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "dsrefine/errors.hpp"

namespace dsrefine {

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string scores_csv(const Dataset& d, const ScoreVector& s) {
    if (s.size() != d.size()) throw InvalidArgument("score vector length does not match dataset");
    std::ostringstream out;
    out << "index,subject_id,label,score,metric_tag\n";
    for (std::size_t i = 0; i < d.size(); ++i)
        out << i << ',' << d.trials[i].subject_id << ',' << d.trials[i].label << ',' << format_number(s.scores[i]) << ','
            << to_string(s.metric_tag) << '\n';
    return out.str();
}

std::string raw_csv(const ExperimentResult& r) {
    std::ostringstream out;
    out << "fold,ratio,seed,accuracy,n_removed,recall,precision\n";
    for (const auto& c : r.cells)
        out << c.fold << ',' << format_number(c.ratio) << ',' << c.seed << ',' << format_number(c.accuracy) << ','
            << c.n_removed << ',' << format_number(c.recall) << ',' << format_number(c.precision) << '\n';
    return out.str();
}

std::string summary_csv(const ExperimentResult& r) {
    std::ostringstream out;
    out << "ratio,mean,std\n";
    for (const auto& s : r.summary)
        out << format_number(s.ratio) << ',' << format_number(s.mean) << ',' << format_number(s.std) << '\n';
    return out.str();
}

std::string plan_csv(const Dataset& d, const RefinementPlan& plan, const ScoreVector* scores) {
    std::ostringstream out;
    out << "index,subject_id,label,score,noisy\n";
    for (std::size_t i : plan.removed_indices) {
        if (i >= d.size()) throw InvalidArgument("plan index out of range");
        out << i << ',' << d.trials[i].subject_id << ',' << d.trials[i].label << ','
            << format_number(scores ? scores->scores.at(i) : std::nan("")) << ','
            << (d.noise_mask ? std::to_string(int((*d.noise_mask)[i])) : std::string("nan")) << '\n';
    }
    return out.str();
}

std::string loss_curve_csv(const TrainReport& report, const TrainConfig& cfg) {
    std::ostringstream out;
    out << "epoch,loss,lr\n";
    for (std::size_t e = 0; e < report.loss_curve.size(); ++e)
        out << e << ',' << format_number(report.loss_curve[e]) << ','
            << format_number(cfg.optimizer == Optimizer::Newton ? std::nan("") : lr_at(static_cast<int>(e), cfg))
            << '\n';
    return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

void emit_report(const ExperimentResult& r, const std::filesystem::path& dir, const std::string& resolved_config_json) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    write_text(dir / "raw.csv", raw_csv(r));
    write_text(dir / "summary.csv", summary_csv(r));
    write_text(dir / "resolved_config.json", resolved_config_json);

    // Mean removal recall/precision per ratio over the cells where it is defined.
    std::map<double, std::pair<std::vector<double>, std::vector<double>>> quality;
    for (const auto& c : r.cells) {
        auto& q = quality[c.ratio];
        if (!std::isnan(c.recall)) q.first.push_back(c.recall);
        if (!std::isnan(c.precision)) q.second.push_back(c.precision);
    }
    auto mean_or_null = [](const std::vector<double>& v) -> nlohmann::json {
        if (v.empty()) return nullptr;
        double s = 0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    nlohmann::ordered_json info;
    info["metric_tag"] = std::string(to_string(r.metric_tag));
    info["best_ratio"] = std::isnan(r.best_ratio) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(r.best_ratio);
    info["threshold_selection"] =
        "ratio chosen by mean leave-one-subject-out test accuracy; no inner validation split (optimistic selection)";
    info["cells"] = r.cells.size();
    nlohmann::ordered_json per_ratio = nlohmann::ordered_json::array();
    for (const auto& s : r.summary) {
        const auto& q = quality[s.ratio];
        per_ratio.push_back({{"ratio", s.ratio},
                             {"mean_accuracy", s.mean},
                             {"std_accuracy", s.std},
                             {"count", s.count},
                             {"mean_recall", mean_or_null(q.first)},
                             {"mean_precision", mean_or_null(q.second)}});
    }
    info["ratios"] = per_ratio;
    write_text(dir / "experiment.json", info.dump(2) + "\n");
}

}  // namespace dsrefine
