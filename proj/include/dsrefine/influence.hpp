#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string_view>

#include "dsrefine/model.hpp"
#include "dsrefine/scores.hpp"

namespace dsrefine {

/// How the fixed left-hand gradient of the influence score is formed.
///   TotalTrain:   g = sum over the training set of the full per-sample objective gradient
///                 (cross-entropy + L2 share), which vanishes at the exact minimizer.
///   Self:         s_i = grad_i^T (H + dI)^-1 grad_i.
///   ReferenceSet: g = sum of cross-entropy gradients over a separate reference set.
enum class InfluenceMode { TotalTrain, Self, ReferenceSet };

std::string_view to_string(InfluenceMode mode);
InfluenceMode parse_influence_mode(std::string_view name);

struct InfluenceConfig {
    double damping = 1e-3;
    InfluenceMode mode = InfluenceMode::TotalTrain;
    double cg_tol = 1e-8;
    /// Defaults to min(10 P, 10000) when unset.
    std::optional<int> cg_max_iters;
    std::size_t use_dense_if_P_leq = 500;

    void validate() const;
    int max_iters_for(std::size_t param_count) const;
};

struct SolveResult {
    ParamVector u;
    int iterations = 0;
    double relative_residual = 0.0;  ///< |(H + dI) u - v| / |v|, from one extra HVP
    bool dense = false;
};

/// Applies (H + dI)^-1 for a fixed (model, theta, data). The dense path factorizes once, so
/// repeated solves are cheap; the CG path runs matrix-free on hvp().
class HessianSolver {
public:
    HessianSolver(const ModelSpec& spec, const ParamVector& theta, const Samples& s, const InfluenceConfig& cfg);
    ~HessianSolver();
    HessianSolver(HessianSolver&&) noexcept;
    HessianSolver& operator=(HessianSolver&&) noexcept;

    SolveResult solve(const ParamVector& v) const;
    /// Columns of V solved independently.
    Matrix solve_many(const Matrix& V) const;

    bool dense() const noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// u with |(H + dI) u - v| <= cg_tol |v|. Dense Cholesky when P <= use_dense_if_P_leq,
/// otherwise unpreconditioned CG. Throws ConvergenceError when CG runs out of iterations or
/// meets non-positive curvature.
SolveResult solve_hinv_v(const ModelSpec& spec, const ParamVector& theta, const Samples& s, const ParamVector& v,
                         const InfluenceConfig& cfg);

/// Influence score of every training sample. `ref` is required iff mode == ReferenceSet.
ScoreVector influence_scores(const ModelSpec& spec, const ParamVector& theta, const Samples& s,
                             const InfluenceConfig& cfg, const Samples* ref = nullptr);

}  // namespace dsrefine
