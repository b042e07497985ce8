#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

#include "dsrefine/model.hpp"
#include "dsrefine/scores.hpp"

namespace dsrefine {

/// Which probability counts as the model's confidence on a pass.
enum class Confidence { TrueLabel, MaxClass };

std::string_view to_string(Confidence c);
Confidence parse_confidence(std::string_view name);

struct McConfig {
    int T = 30;
    std::optional<double> dropout_rate_override;
    std::uint64_t seed = 0;
    Confidence confidence = Confidence::TrueLabel;

    void validate() const;
};

/// Mean of p - p^2 over the given per-pass confidences (running mean, so identical inputs
/// return p - p^2 exactly).
double bernoulli_variance_mean(std::span<const double> confidences);

/// MC-dropout uncertainty per trial: T forward passes with independent masks, each drawn
/// from a stream keyed by (seed, trial index, pass). Scheduling-independent.
ScoreVector mc_dropout_scores(const ModelSpec& spec, const ParamVector& theta, const Samples& s, const McConfig& cfg);

}  // namespace dsrefine
