#include "dsrefine/influence.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <variant>

#include "dsrefine/errors.hpp"
#include "dsrefine/parallel.hpp"

namespace dsrefine {

std::string_view to_string(MetricTag tag) {
    switch (tag) {
        case MetricTag::Influence: return "influence";
        case MetricTag::McDropout: return "mc-dropout";
        case MetricTag::Random: return "random";
    }
    return "unknown";
}

std::string_view to_string(InfluenceMode mode) {
    switch (mode) {
        case InfluenceMode::TotalTrain: return "total-train";
        case InfluenceMode::Self: return "self";
        case InfluenceMode::ReferenceSet: return "reference-set";
    }
    return "unknown";
}

InfluenceMode parse_influence_mode(std::string_view name) {
    if (name == "total-train") return InfluenceMode::TotalTrain;
    if (name == "self") return InfluenceMode::Self;
    if (name == "reference-set") return InfluenceMode::ReferenceSet;
    throw InvalidArgument("unknown influence mode '" + std::string(name) + "'");
}

void InfluenceConfig::validate() const {
    if (!(damping > 0.0) || !std::isfinite(damping)) throw InvalidArgument("influence damping must be > 0");
    if (!(cg_tol > 0.0)) throw InvalidArgument("cg_tol must be > 0");
    if (cg_max_iters && *cg_max_iters < 1) throw InvalidArgument("cg_max_iters must be >= 1");
}

int InfluenceConfig::max_iters_for(std::size_t param_count) const {
    if (cg_max_iters) return *cg_max_iters;
    return static_cast<int>(std::min<std::size_t>(10 * param_count, 10000));
}

struct HessianSolver::Impl {
    ModelSpec spec;
    ParamVector theta;
    Samples samples;
    InfluenceConfig cfg;
    std::variant<std::monostate, Eigen::LLT<Matrix>, Eigen::LDLT<Matrix>> factor;
    Matrix H;  // dense path only

    ParamVector apply(const ParamVector& v) const { return hvp(spec, theta, samples, v, cfg.damping); }

    Matrix dense_solve(const Matrix& V) const {
        if (const auto* llt = std::get_if<Eigen::LLT<Matrix>>(&factor)) return llt->solve(V);
        return std::get<Eigen::LDLT<Matrix>>(factor).solve(V);
    }

    SolveResult solve_dense(const ParamVector& v) const {
        const double vnorm = v.norm();
        SolveResult res;
        res.dense = true;
        res.u = dense_solve(v);
        // A couple of refinement sweeps recover accuracy lost to conditioning.
        for (int k = 0; k < 3; ++k) {
            const ParamVector r = v - H * res.u;
            if (r.norm() <= 0.1 * cfg.cg_tol * vnorm) break;
            res.u += dense_solve(r);
            ++res.iterations;
        }
        res.relative_residual = (apply(res.u) - v).norm() / vnorm;
        if (!(res.relative_residual <= cfg.cg_tol))
            throw ConvergenceError("dense solve residual " + std::to_string(res.relative_residual) + " exceeds tolerance",
                                   res.relative_residual, res.iterations);
        return res;
    }

    SolveResult solve_cg(const ParamVector& v) const {
        const double vnorm = v.norm();
        const double target = cfg.cg_tol * vnorm;
        const int max_iters = cfg.max_iters_for(spec.param_count());

        SolveResult res;
        res.u = ParamVector::Zero(v.size());
        ParamVector r = v;
        int it = 0;
        // Outer loop restarts from the true residual if the recursive one drifted.
        for (;;) {
            ParamVector p = r;
            double rr = r.squaredNorm();
            while (std::sqrt(rr) > target) {
                if (it >= max_iters) {
                    const double rel = std::sqrt(rr) / vnorm;
                    throw ConvergenceError("CG did not converge in " + std::to_string(max_iters) +
                                               " iterations, relative residual " + std::to_string(rel),
                                           rel, it);
                }
                const ParamVector Ap = apply(p);
                const double curvature = p.dot(Ap);
                if (!(curvature > 0.0))
                    throw ConvergenceError("CG met non-positive curvature; damped Hessian is not positive definite",
                                           std::sqrt(rr) / vnorm, it);
                const double alpha = rr / curvature;
                res.u += alpha * p;
                r -= alpha * Ap;
                const double rr_next = r.squaredNorm();
                p = r + (rr_next / rr) * p;
                rr = rr_next;
                ++it;
            }
            r = v - apply(res.u);
            if (r.norm() <= target) break;
            if (it >= max_iters)
                throw ConvergenceError("CG residual drifted above tolerance", r.norm() / vnorm, it);
        }
        res.iterations = it;
        res.relative_residual = r.norm() / vnorm;
        return res;
    }
};

HessianSolver::HessianSolver(const ModelSpec& spec, const ParamVector& theta, const Samples& s,
                             const InfluenceConfig& cfg)
    : impl_(std::make_unique<Impl>()) {
    cfg.validate();
    spec.validate();
    impl_->spec = spec;
    impl_->theta = theta;
    impl_->samples = s;
    impl_->cfg = cfg;
    if (!s.empty() && spec.param_count() <= cfg.use_dense_if_P_leq) {
        impl_->H = exact_hessian(spec, theta, s, cfg.damping, std::max(cfg.use_dense_if_P_leq, kDefaultHessianCap));
        Eigen::LLT<Matrix> llt(impl_->H);
        if (llt.info() == Eigen::Success)
            impl_->factor = std::move(llt);
        else
            impl_->factor = Eigen::LDLT<Matrix>(impl_->H);
    } else {
        // Validates dimensions up front for the matrix-free path.
        (void)impl_->apply(ParamVector::Zero(static_cast<Eigen::Index>(spec.param_count())));
    }
}

HessianSolver::~HessianSolver() = default;
HessianSolver::HessianSolver(HessianSolver&&) noexcept = default;
HessianSolver& HessianSolver::operator=(HessianSolver&&) noexcept = default;

bool HessianSolver::dense() const noexcept { return !std::holds_alternative<std::monostate>(impl_->factor); }

SolveResult HessianSolver::solve(const ParamVector& v) const {
    if (static_cast<std::size_t>(v.size()) != impl_->spec.param_count())
        throw InvalidArgument("solve: right-hand side has the wrong length");
    if (!v.allFinite()) throw NumericalError("solve: right-hand side is not finite");

    SolveResult res;
    res.dense = dense();
    const double vnorm = v.norm();
    if (vnorm == 0.0) {
        res.u = ParamVector::Zero(v.size());
        return res;
    }
    if (impl_->samples.empty()) {
        // H = 0: the damped system is diagonal.
        res.u = v / impl_->cfg.damping;
        res.relative_residual = (impl_->apply(res.u) - v).norm() / vnorm;
        return res;
    }
    return dense() ? impl_->solve_dense(v) : impl_->solve_cg(v);
}

Matrix HessianSolver::solve_many(const Matrix& V) const {
    Matrix U(V.rows(), V.cols());
    parallel_for(static_cast<std::size_t>(V.cols()), [&](std::size_t j) {
        U.col(static_cast<Eigen::Index>(j)) = solve(V.col(static_cast<Eigen::Index>(j))).u;
    });
    return U;
}

SolveResult solve_hinv_v(const ModelSpec& spec, const ParamVector& theta, const Samples& s, const ParamVector& v,
                         const InfluenceConfig& cfg) {
    return HessianSolver(spec, theta, s, cfg).solve(v);
}

ScoreVector influence_scores(const ModelSpec& spec, const ParamVector& theta, const Samples& s,
                             const InfluenceConfig& cfg, const Samples* ref) {
    cfg.validate();
    if (cfg.mode == InfluenceMode::ReferenceSet && ref == nullptr)
        throw InvalidArgument("reference-set influence mode needs a reference dataset");
    if (s.empty()) throw InvalidArgument("influence scores of an empty dataset");

    const Matrix G = per_sample_grads(spec, theta, s);
    const HessianSolver solver(spec, theta, s, cfg);

    ScoreVector out;
    out.metric_tag = MetricTag::Influence;
    out.scores.resize(s.size());

    // Scores go through aligned copies one column at a time, so a trial's score depends only on its
    // gradient and not on where it sits in G (vectorised kernels peel differently per offset).
    if (cfg.mode == InfluenceMode::Self) {
        parallel_for(s.size(), [&](std::size_t i) {
            const ParamVector gi = G.col(static_cast<Eigen::Index>(i));
            out.scores[i] = gi.dot(solver.solve(gi).u);
        });
        return out;
    }

    ParamVector g;
    if (cfg.mode == InfluenceMode::TotalTrain) {
        g = G.rowwise().sum() + static_cast<double>(s.size()) * spec.weight_decay * theta;
    } else {
        if (ref->empty()) throw InvalidArgument("reference dataset is empty");
        g = per_sample_grads(spec, theta, *ref).rowwise().sum();
    }
    // H is symmetric, so g^T H^-1 grad_i = (H^-1 g)^T grad_i: one solve serves every sample.
    const ParamVector g_tilde = solver.solve(g).u;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const ParamVector gi = G.col(static_cast<Eigen::Index>(i));
        out.scores[i] = g_tilde.dot(gi);
    }
    return out;
}

}  // namespace dsrefine
