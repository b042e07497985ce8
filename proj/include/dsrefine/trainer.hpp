#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "dsrefine/dataset.hpp"
#include "dsrefine/model.hpp"

namespace dsrefine {

enum class Optimizer {
    AdamW,   ///< decoupled weight decay, cosine schedule with linear warmup
    Sgd,     ///< plain theta -= lr * grad on the same schedule
    Newton,  ///< full-batch damped Newton with backtracking; for converging convex oracle runs
};

std::string_view to_string(Optimizer opt);
Optimizer parse_optimizer(std::string_view name);

struct TrainConfig {
    double lr_peak = 2e-3;
    int epochs = 300;
    int warmup_epochs = 10;
    int batch_size = 64;
    /// Decoupled AdamW decay. Independent of ModelSpec::weight_decay, which is part of the loss.
    double weight_decay = 1e-2;
    std::uint64_t seed = 0;
    /// Stop once the full-data gradient norm drops to this value (checked after every epoch).
    std::optional<double> grad_tol;
    Optimizer optimizer = Optimizer::AdamW;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

struct TrainReport {
    ParamVector theta;
    std::vector<double> loss_curve;
    double final_grad_norm = 0.0;
};

/// Linear warmup 0 -> lr_peak over warmup_epochs, then half-cosine decay to the last epoch.
double lr_at(int epoch, const TrainConfig& cfg);

struct AdamState {
    Vector m;
    Vector v;
    std::int64_t step = 0;
};

struct AdamHyper {
    double lr = 2e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// One AdamW update in place:
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * weight_decay * theta
/// where the decay term uses the pre-update theta. Throws NumericalError on a non-finite gradient.
void adamw_step(ParamVector& theta, const ParamVector& g, AdamState& state, const AdamHyper& hyper);

/// Empirical risk minimization from init_params(spec, cfg.seed). Dropout is active during
/// mini-batch updates of an mlp-dropout model. Bit-identical for identical inputs.
TrainReport train(const ModelSpec& spec, const Samples& s, const TrainConfig& cfg);
TrainReport train(const ModelSpec& spec, const Dataset& d, const TrainConfig& cfg);

/// Fraction of samples whose argmax probability (lowest index on ties) equals the label.
double evaluate(const ModelSpec& spec, const ParamVector& theta, const Samples& s);
double evaluate(const ModelSpec& spec, const ParamVector& theta, const Dataset& d);

/// Argmax class per sample with the lowest-index tie rule.
std::vector<std::uint32_t> predict(const ModelSpec& spec, const ParamVector& theta, const Samples& s);

}  // namespace dsrefine
