#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsrefine/dataset.hpp"
#include "dsrefine/rng.hpp"

namespace dsrefine {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Flat parameter vector. Segment boundaries come from param_layout().
using ParamVector = Eigen::VectorXd;

enum class Arch { LinearSoftmax, MlpDropout };

std::string_view to_string(Arch arch);
Arch parse_arch(std::string_view name);

/// Architecture descriptor.
///
/// linear-softmax: logits = W x + b.
/// mlp-dropout:    logits = W2 (mask * tanh(W1 x + b1)) + b2, inverted dropout on the hidden layer.
///
/// `weight_decay` is an L2 term inside the empirical risk:
///   loss = mean_i CE_i + weight_decay / 2 * |theta|^2.
struct ModelSpec {
    Arch arch = Arch::LinearSoftmax;
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 16;  ///< mlp only
    std::size_t n_classes = 0;
    double dropout_rate = 0.5;    ///< mlp only
    double weight_decay = 1e-3;

    std::size_t param_count() const;
    bool has_dropout() const noexcept { return arch == Arch::MlpDropout; }
    void validate() const;
};

struct ParamSegment {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

/// linear-softmax: W (C x D, row-major), b (C).
/// mlp-dropout:    W1 (H x D), b1 (H), W2 (C x H), b2 (C), matrices row-major.
std::vector<ParamSegment> param_layout(const ModelSpec& spec);

/// Glorot-uniform weights, zero biases.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

/// Flattened trials as columns of X (input_dim x n).
struct Samples {
    Matrix X;
    std::vector<std::uint32_t> y;
    std::size_t n_classes = 0;

    std::size_t size() const noexcept { return y.size(); }
    bool empty() const noexcept { return y.empty(); }
};

Samples to_samples(const Dataset& d);

/// Per-hidden-unit multipliers, each 0 or 1 / (1 - rate).
struct DropoutMask {
    Vector keep;
};

DropoutMask draw_dropout_mask(std::size_t hidden_dim, double rate, Rng& rng);

/// Class probabilities for one input. A mask is only valid for mlp-dropout.
Vector forward(const ModelSpec& spec, const ParamVector& theta, const Eigen::Ref<const Vector>& x,
               const DropoutMask* mask = nullptr);

/// Probabilities for every sample (C x n), dropout disabled.
Matrix predict_proba(const ModelSpec& spec, const ParamVector& theta, const Samples& s);

/// Mean cross-entropy plus the L2 term. Dropout disabled.
double loss(const ModelSpec& spec, const ParamVector& theta, const Samples& s);
double loss(const ModelSpec& spec, const ParamVector& theta, const Samples& s, std::span<const std::size_t> rows);

/// Gradient of loss().
ParamVector grad(const ModelSpec& spec, const ParamVector& theta, const Samples& s);
ParamVector grad(const ModelSpec& spec, const ParamVector& theta, const Samples& s, std::span<const std::size_t> rows);

struct LossGrad {
    double ce_sum = 0.0;  ///< sum of per-sample cross-entropies
    ParamVector grad_sum; ///< sum of per-sample cross-entropy gradients (no L2 term)
};

/// Cross-entropy sums over `rows`. `masks` (hidden_dim x |rows|), when non-null, applies one
/// dropout mask per row; mlp-dropout only.
LossGrad ce_loss_grad_sum(const ModelSpec& spec, const ParamVector& theta, const Samples& s,
                          std::span<const std::size_t> rows, const Matrix* masks = nullptr);

/// Gradient of each sample's cross-entropy, without the L2 term (P x n).
Matrix per_sample_grads(const ModelSpec& spec, const ParamVector& theta, const Samples& s);

/// (H + damping I) v where H = sum_i Hess(CE_i + weight_decay/2 |theta|^2), i.e. the summed
/// per-sample Hessian plus n * weight_decay * I. Dropout disabled. An empty sample set gives H = 0.
ParamVector hvp(const ModelSpec& spec, const ParamVector& theta, const Samples& s, const ParamVector& v,
                double damping);

inline constexpr std::size_t kDefaultHessianCap = 2000;

/// Dense H + damping I with H as in hvp(). Built by an independent route (closed-form blocks for
/// linear-softmax, Jacobian outer products plus curvature terms for the mlp), so it can serve as
/// an oracle for hvp(). Throws CapacityError when P > cap.
Matrix exact_hessian(const ModelSpec& spec, const ParamVector& theta, const Samples& s, double damping,
                     std::size_t cap = kDefaultHessianCap);

// ParamVector file: "PRMV" | version u32 = 1 | P u64 | f64 values (little-endian).
inline constexpr std::uint32_t kParamFormatVersion = 1;

std::vector<std::uint8_t> encode_params(const ParamVector& theta);
ParamVector decode_params(std::span<const std::uint8_t> bytes);
void save_params(const ParamVector& theta, const std::filesystem::path& path);
ParamVector load_params(const std::filesystem::path& path);

}  // namespace dsrefine
