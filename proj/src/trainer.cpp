#include "dsrefine/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "dsrefine/errors.hpp"
#include "dsrefine/rng.hpp"

namespace dsrefine {

std::string_view to_string(Optimizer opt) {
    switch (opt) {
        case Optimizer::AdamW: return "adamw";
        case Optimizer::Sgd: return "sgd";
        case Optimizer::Newton: return "newton";
    }
    return "unknown";
}

Optimizer parse_optimizer(std::string_view name) {
    if (name == "adamw") return Optimizer::AdamW;
    if (name == "sgd") return Optimizer::Sgd;
    if (name == "newton") return Optimizer::Newton;
    throw InvalidArgument("unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
    if (warmup_epochs < 0 || warmup_epochs > epochs) throw InvalidArgument("warmup_epochs must lie in [0, epochs]");
    if (!(lr_peak >= 0.0) || !std::isfinite(lr_peak)) throw InvalidArgument("lr_peak must be finite and >= 0");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be >= 0");
    if (grad_tol && !(*grad_tol > 0.0)) throw InvalidArgument("grad_tol must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidArgument("betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw InvalidArgument("adam_eps must be > 0");
}

double lr_at(int epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.epochs)
        throw InvalidArgument("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
    if (epoch < cfg.warmup_epochs) return cfg.lr_peak * epoch / cfg.warmup_epochs;
    const double t = static_cast<double>(epoch - cfg.warmup_epochs) / (cfg.epochs - cfg.warmup_epochs);
    return cfg.lr_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void adamw_step(ParamVector& theta, const ParamVector& g, AdamState& state, const AdamHyper& hyper) {
    if (g.size() != theta.size()) throw InvalidArgument("gradient and parameter shapes differ");
    if (!g.allFinite()) throw NumericalError("non-finite gradient at optimizer step " + std::to_string(state.step + 1));
    if (state.m.size() == 0) {
        state.m = Vector::Zero(theta.size());
        state.v = Vector::Zero(theta.size());
    }
    if (state.m.size() != theta.size() || state.v.size() != theta.size())
        throw InvalidArgument("optimizer state shape does not match parameters");

    ++state.step;
    state.m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * g;
    state.v = hyper.beta2 * state.v + (1.0 - hyper.beta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
    const Vector m_hat = state.m / bc1;
    const Vector v_hat = state.v / bc2;
    const Vector update = (m_hat.array() / (v_hat.array().sqrt() + hyper.eps)).matrix();
    theta -= hyper.lr * update + hyper.lr * hyper.weight_decay * theta;
}

namespace {

double full_grad_norm(const ModelSpec& spec, const ParamVector& theta, const Samples& s) {
    return grad(spec, theta, s).norm();
}

void newton_epoch(const ModelSpec& spec, ParamVector& theta, const Samples& s, const ParamVector& g) {
    const double n = static_cast<double>(s.size());
    const Matrix H = exact_hessian(spec, theta, s, 0.0) / n;
    Vector dir;
    Eigen::LLT<Matrix> llt(H);
    if (llt.info() == Eigen::Success) {
        dir = -llt.solve(g);
    } else {
        dir = -Eigen::LDLT<Matrix>(H).solve(g);
    }
    if (!dir.allFinite() || dir.dot(g) >= 0.0) dir = -g;

    const double f0 = loss(spec, theta, s);
    const double slope = dir.dot(g);
    double step = 1.0;
    for (int k = 0; k < 60; ++k, step *= 0.5) {
        const ParamVector cand = theta + step * dir;
        const double f = loss(spec, cand, s);
        if (std::isfinite(f) && f <= f0 + 1e-4 * step * slope) {
            theta = cand;
            return;
        }
    }
    // No sufficient decrease at any step size: already at numerical optimum.
}

}  // namespace

TrainReport train(const ModelSpec& spec, const Samples& s, const TrainConfig& cfg) {
    spec.validate();
    cfg.validate();
    if (s.empty()) throw InvalidArgument("cannot train on an empty dataset");

    TrainReport report;
    ParamVector theta = init_params(spec, cfg.seed);
    const std::size_t n = s.size();

    if (cfg.optimizer == Optimizer::Newton) {
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            const ParamVector g = grad(spec, theta, s);
            if (!g.allFinite()) throw NumericalError("non-finite gradient at epoch " + std::to_string(epoch));
            if (cfg.grad_tol && g.norm() <= *cfg.grad_tol) break;
            newton_epoch(spec, theta, s, g);
            report.loss_curve.push_back(loss(spec, theta, s));
        }
        report.final_grad_norm = full_grad_norm(spec, theta, s);
        report.theta = std::move(theta);
        return report;
    }

    Rng shuffle_rng(derive_seed(cfg.seed, {stream::kShuffle}));
    Rng dropout_rng(derive_seed(cfg.seed, {stream::kTrainDropout}));
    const bool use_dropout = spec.has_dropout() && spec.dropout_rate > 0.0;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    AdamState state;
    const auto bs = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(epoch, cfg);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double ce_total = 0.0;
        for (std::size_t lo = 0; lo < n; lo += bs) {
            const std::size_t hi = std::min(n, lo + bs);
            const std::span<const std::size_t> rows(order.data() + lo, hi - lo);
            Matrix masks;
            if (use_dropout) {
                masks.resize(static_cast<Eigen::Index>(spec.hidden_dim), static_cast<Eigen::Index>(rows.size()));
                for (Eigen::Index j = 0; j < masks.cols(); ++j)
                    masks.col(j) = draw_dropout_mask(spec.hidden_dim, spec.dropout_rate, dropout_rng).keep;
            }
            const LossGrad lg = ce_loss_grad_sum(spec, theta, s, rows, use_dropout ? &masks : nullptr);
            const ParamVector g = lg.grad_sum / static_cast<double>(rows.size()) + spec.weight_decay * theta;
            if (!g.allFinite())
                throw NumericalError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch offset " +
                                     std::to_string(lo));
            ce_total += lg.ce_sum;
            if (cfg.optimizer == Optimizer::AdamW) {
                adamw_step(theta, g, state,
                           {lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay});
            } else {
                theta -= lr * g;
            }
        }
        report.loss_curve.push_back(ce_total / static_cast<double>(n) + 0.5 * spec.weight_decay * theta.squaredNorm());
        if (cfg.grad_tol && full_grad_norm(spec, theta, s) <= *cfg.grad_tol) break;
    }
    report.final_grad_norm = full_grad_norm(spec, theta, s);
    report.theta = std::move(theta);
    return report;
}

TrainReport train(const ModelSpec& spec, const Dataset& d, const TrainConfig& cfg) {
    return train(spec, to_samples(d), cfg);
}

std::vector<std::uint32_t> predict(const ModelSpec& spec, const ParamVector& theta, const Samples& s) {
    const Matrix P = predict_proba(spec, theta, s);
    std::vector<std::uint32_t> out(s.size());
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < P.rows(); ++c)
            if (P(c, j) > P(best, j)) best = c;
        out[static_cast<std::size_t>(j)] = static_cast<std::uint32_t>(best);
    }
    return out;
}

double evaluate(const ModelSpec& spec, const ParamVector& theta, const Samples& s) {
    if (s.empty()) throw InvalidArgument("cannot evaluate on an empty dataset");
    const auto pred = predict(spec, theta, s);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == s.y[i];
    return static_cast<double>(correct) / static_cast<double>(s.size());
}

double evaluate(const ModelSpec& spec, const ParamVector& theta, const Dataset& d) {
    return evaluate(spec, theta, to_samples(d));
}

}  // namespace dsrefine
