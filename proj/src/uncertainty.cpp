#include "dsrefine/uncertainty.hpp"

#include <string>
#include <vector>

#include "dsrefine/errors.hpp"
#include "dsrefine/parallel.hpp"
#include "dsrefine/rng.hpp"

namespace dsrefine {

std::string_view to_string(Confidence c) { return c == Confidence::TrueLabel ? "true-label" : "max-class"; }

Confidence parse_confidence(std::string_view name) {
    if (name == "true-label") return Confidence::TrueLabel;
    if (name == "max-class") return Confidence::MaxClass;
    throw InvalidArgument("unknown confidence kind '" + std::string(name) + "'");
}

void McConfig::validate() const {
    if (T < 1) throw InvalidArgument("MC-dropout needs T >= 1 passes");
    if (dropout_rate_override && !(*dropout_rate_override >= 0.0 && *dropout_rate_override < 1.0))
        throw InvalidArgument("dropout_rate_override must lie in [0, 1)");
}

double bernoulli_variance_mean(std::span<const double> confidences) {
    if (confidences.empty()) throw InvalidArgument("no confidences to average");
    double mean = 0.0;
    std::size_t k = 0;
    for (double p : confidences) {
        ++k;
        mean += (p - p * p - mean) / static_cast<double>(k);
    }
    return mean;
}

ScoreVector mc_dropout_scores(const ModelSpec& spec, const ParamVector& theta, const Samples& s, const McConfig& cfg) {
    cfg.validate();
    if (!spec.has_dropout())
        throw UnsupportedArchitecture("MC-dropout scoring needs a dropout architecture, got " +
                                      std::string(to_string(spec.arch)));
    spec.validate();
    const double rate = cfg.dropout_rate_override.value_or(spec.dropout_rate);

    ScoreVector out;
    out.metric_tag = MetricTag::McDropout;
    out.scores.resize(s.size());
    parallel_for(s.size(), [&](std::size_t i) {
        const auto x = s.X.col(static_cast<Eigen::Index>(i));
        std::vector<double> conf(static_cast<std::size_t>(cfg.T));
        for (int t = 0; t < cfg.T; ++t) {
            Rng rng(derive_seed(cfg.seed, {stream::kMcDropout, i, static_cast<std::uint64_t>(t)}));
            const DropoutMask mask = draw_dropout_mask(spec.hidden_dim, rate, rng);
            const Vector p = forward(spec, theta, x, &mask);
            conf[static_cast<std::size_t>(t)] = cfg.confidence == Confidence::TrueLabel ? p[s.y[i]] : p.maxCoeff();
        }
        out.scores[i] = bernoulli_variance_mean(conf);
    });
    return out;
}

}  // namespace dsrefine
