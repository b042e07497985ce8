#pragma once

#include <string_view>
#include <vector>

namespace dsrefine {

enum class MetricTag { Influence, McDropout, Random };

std::string_view to_string(MetricTag tag);

/// Per-trial scores, index-aligned with the dataset they were computed on.
struct ScoreVector {
    std::vector<double> scores;
    MetricTag metric_tag = MetricTag::Influence;

    std::size_t size() const noexcept { return scores.size(); }
};

}  // namespace dsrefine
