#include "dsrefine/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "binary_io.hpp"
#include "dsrefine/errors.hpp"
#include "reduce.hpp"

namespace dsrefine {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;
using RowMap = Eigen::Map<RowMat>;
using ConstVecMap = Eigen::Map<const Vector>;
using VecMap = Eigen::Map<Vector>;
using Index = Eigen::Index;

std::string_view to_string(Arch arch) {
    switch (arch) {
        case Arch::LinearSoftmax: return "linear-softmax";
        case Arch::MlpDropout: return "mlp-dropout";
    }
    return "unknown";
}

Arch parse_arch(std::string_view name) {
    if (name == "linear-softmax") return Arch::LinearSoftmax;
    if (name == "mlp-dropout") return Arch::MlpDropout;
    throw InvalidArgument("unknown architecture '" + std::string(name) + "'");
}

std::size_t ModelSpec::param_count() const {
    const std::size_t D = input_dim, C = n_classes, H = hidden_dim;
    return arch == Arch::LinearSoftmax ? C * D + C : H * D + H + C * H + C;
}

void ModelSpec::validate() const {
    if (input_dim == 0) throw InvalidArgument("model input_dim must be positive");
    if (n_classes < 2) throw InvalidArgument("model n_classes must be >= 2");
    if (arch == Arch::MlpDropout) {
        if (hidden_dim == 0) throw InvalidArgument("mlp hidden_dim must be positive");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("dropout_rate must lie in [0, 1)");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
        throw InvalidArgument("weight_decay must be finite and >= 0");
}

std::vector<ParamSegment> param_layout(const ModelSpec& spec) {
    const std::size_t D = spec.input_dim, C = spec.n_classes, H = spec.hidden_dim;
    if (spec.arch == Arch::LinearSoftmax) return {{"W", 0, C, D}, {"b", C * D, C, 1}};
    return {{"W1", 0, H, D}, {"b1", H * D, H, 1}, {"W2", H * D + H, C, H}, {"b2", H * D + H + C * H, C, 1}};
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(derive_seed(seed, {stream::kInit}));
    ParamVector theta = ParamVector::Zero(static_cast<Index>(spec.param_count()));
    for (const auto& seg : param_layout(spec)) {
        if (seg.cols == 1) continue;  // biases start at zero
        const double a = std::sqrt(6.0 / static_cast<double>(seg.rows + seg.cols));
        std::uniform_real_distribution<double> dist(-a, a);
        for (std::size_t i = 0; i < seg.rows * seg.cols; ++i) theta[static_cast<Index>(seg.offset + i)] = dist(rng);
    }
    return theta;
}

Samples to_samples(const Dataset& d) {
    Samples s;
    s.n_classes = d.n_classes;
    const auto D = static_cast<Index>(d.trial_length());
    s.X.resize(D, static_cast<Index>(d.size()));
    s.y.reserve(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& t = d.trials[i];
        if (static_cast<Index>(t.data.size()) != D) throw InvalidArgument("trial dimension mismatch");
        for (Index k = 0; k < D; ++k) s.X(k, static_cast<Index>(i)) = t.data[static_cast<std::size_t>(k)];
        s.y.push_back(t.label);
    }
    return s;
}

DropoutMask draw_dropout_mask(std::size_t hidden_dim, double rate, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("dropout rate must lie in [0, 1)");
    DropoutMask m;
    m.keep.resize(static_cast<Index>(hidden_dim));
    const double scale = 1.0 / (1.0 - rate);
    std::bernoulli_distribution keep(1.0 - rate);
    for (Index j = 0; j < m.keep.size(); ++j) m.keep[j] = keep(rng) ? scale : 0.0;
    return m;
}

namespace {

void check_theta(const ModelSpec& spec, const ParamVector& theta) {
    spec.validate();
    if (static_cast<std::size_t>(theta.size()) != spec.param_count())
        throw InvalidArgument("parameter vector has length " + std::to_string(theta.size()) + ", model needs " +
                              std::to_string(spec.param_count()));
}

void check_samples(const ModelSpec& spec, const Samples& s) {
    if (static_cast<std::size_t>(s.X.rows()) != spec.input_dim && !s.empty())
        throw InvalidArgument("sample dimension " + std::to_string(s.X.rows()) + " does not match model input_dim " +
                              std::to_string(spec.input_dim));
    if (static_cast<std::size_t>(s.X.cols()) != s.y.size()) throw InvalidArgument("sample matrix/label count mismatch");
    for (auto y : s.y)
        if (y >= spec.n_classes) throw InvalidArgument("label out of range for model");
}

Matrix gather(const Matrix& X, std::span<const std::size_t> rows) {
    Matrix out(X.rows(), static_cast<Index>(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j) out.col(static_cast<Index>(j)) = X.col(static_cast<Index>(rows[j]));
    return out;
}

// Column-wise softmax in place; returns per-column cross-entropy against y (if given).
Vector softmax_ce(Matrix& Z, std::span<const std::uint32_t> y) {
    Vector ce = Vector::Zero(Z.cols());
    for (Index j = 0; j < Z.cols(); ++j) {
        auto z = Z.col(j);
        z.array() -= z.maxCoeff();
        const double shifted_true = y.empty() ? 0.0 : z[y[static_cast<std::size_t>(j)]];
        z.array() = z.array().exp();
        const double sum = z.sum();
        if (!y.empty()) ce[j] = std::log(sum) - shifted_true;
        z /= sum;
    }
    return ce;
}

struct Views {
    std::size_t D, C, H;
    const double* base;

    ConstRowMap W() const { return {base, static_cast<Index>(C), static_cast<Index>(D)}; }
    ConstVecMap b() const { return {base + C * D, static_cast<Index>(C)}; }
    ConstRowMap W1() const { return {base, static_cast<Index>(H), static_cast<Index>(D)}; }
    ConstVecMap b1() const { return {base + H * D, static_cast<Index>(H)}; }
    ConstRowMap W2() const { return {base + H * D + H, static_cast<Index>(C), static_cast<Index>(H)}; }
    ConstVecMap b2() const { return {base + H * D + H + C * H, static_cast<Index>(C)}; }
};

Views views(const ModelSpec& spec, const ParamVector& v) {
    return {spec.input_dim, spec.n_classes, spec.hidden_dim, v.data()};
}

// Mutable counterparts for writing gradient/HVP output.
struct OutViews {
    std::size_t D, C, H;
    double* base;

    RowMap W() const { return {base, static_cast<Index>(C), static_cast<Index>(D)}; }
    VecMap b() const { return {base + C * D, static_cast<Index>(C)}; }
    RowMap W1() const { return {base, static_cast<Index>(H), static_cast<Index>(D)}; }
    VecMap b1() const { return {base + H * D, static_cast<Index>(H)}; }
    RowMap W2() const { return {base + H * D + H, static_cast<Index>(C), static_cast<Index>(H)}; }
    VecMap b2() const { return {base + H * D + H + C * H, static_cast<Index>(C)}; }
};

OutViews out_views(const ModelSpec& spec, ParamVector& v) {
    return {spec.input_dim, spec.n_classes, spec.hidden_dim, v.data()};
}

// Forward state of one block of samples.
struct Block {
    Matrix Hh;  // tanh activations (mlp)
    Matrix Hm;  // masked activations (mlp)
    Matrix P;   // probabilities
    Vector ce;
};

Block forward_block(const ModelSpec& spec, const ParamVector& theta, const Matrix& Xb,
                    std::span<const std::uint32_t> yb, const Matrix* Mb) {
    const auto t = views(spec, theta);
    Block blk;
    if (spec.arch == Arch::LinearSoftmax) {
        blk.P = t.W() * Xb;
        blk.P.colwise() += t.b();
    } else {
        Matrix A = t.W1() * Xb;
        A.colwise() += t.b1();
        blk.Hh = A.array().tanh().matrix();
        blk.Hm = Mb ? Matrix(blk.Hh.cwiseProduct(*Mb)) : blk.Hh;
        blk.P = t.W2() * blk.Hm;
        blk.P.colwise() += t.b2();
    }
    blk.ce = softmax_ce(blk.P, yb);
    return blk;
}

// Residual P - onehot(y).
Matrix residual(const Matrix& P, std::span<const std::uint32_t> yb) {
    Matrix G = P;
    for (std::size_t j = 0; j < yb.size(); ++j) G(static_cast<Index>(yb[j]), static_cast<Index>(j)) -= 1.0;
    return G;
}

void accumulate_grad(const ModelSpec& spec, const ParamVector& theta, const Matrix& Xb, const Block& blk,
                     const Matrix& G, const Matrix* Mb, ParamVector& out) {
    auto o = out_views(spec, out);
    if (spec.arch == Arch::LinearSoftmax) {
        o.W().noalias() += G * Xb.transpose();
        o.b() += G.rowwise().sum();
        return;
    }
    const auto t = views(spec, theta);
    o.W2().noalias() += G * blk.Hm.transpose();
    o.b2() += G.rowwise().sum();
    Matrix Dh = t.W2().transpose() * G;
    if (Mb) Dh = Dh.cwiseProduct(*Mb);
    const Matrix Da = Dh.cwiseProduct((1.0 - blk.Hh.array().square()).matrix());
    o.W1().noalias() += Da * Xb.transpose();
    o.b1() += Da.rowwise().sum();
}

// Gauss-Newton contraction (diag(p) - p p^T) u, column-wise.
Matrix softmax_jvp(const Matrix& P, const Matrix& U) {
    const Matrix PU = P.cwiseProduct(U);
    const Eigen::RowVectorXd dots = PU.colwise().sum();
    return PU - P * dots.asDiagonal();
}

void accumulate_hvp(const ModelSpec& spec, const ParamVector& theta, const ParamVector& v, const Matrix& Xb,
                    std::span<const std::uint32_t> yb, ParamVector& out) {
    const Block blk = forward_block(spec, theta, Xb, yb, nullptr);
    const auto t = views(spec, theta);
    const auto dv = views(spec, v);
    auto o = out_views(spec, out);
    if (spec.arch == Arch::LinearSoftmax) {
        Matrix U = dv.W() * Xb;
        U.colwise() += dv.b();
        const Matrix Wt = softmax_jvp(blk.P, U);
        o.W().noalias() += Wt * Xb.transpose();
        o.b() += Wt.rowwise().sum();
        return;
    }
    // R-operator pass through the tanh network.
    const Matrix G = residual(blk.P, yb);
    const Matrix dtanh = (1.0 - blk.Hh.array().square()).matrix();
    Matrix RA = dv.W1() * Xb;
    RA.colwise() += dv.b1();
    const Matrix RH = dtanh.cwiseProduct(RA);
    Matrix RZ = dv.W2() * blk.Hh + t.W2() * RH;
    RZ.colwise() += dv.b2();
    const Matrix RG = softmax_jvp(blk.P, RZ);

    o.W2().noalias() += RG * blk.Hh.transpose() + G * RH.transpose();
    o.b2() += RG.rowwise().sum();

    const Matrix Dh = t.W2().transpose() * G;
    const Matrix RDh = dv.W2().transpose() * G + t.W2().transpose() * RG;
    const Matrix RDa =
        RDh.cwiseProduct(dtanh) - 2.0 * Dh.cwiseProduct(blk.Hh).cwiseProduct(RH);
    o.W1().noalias() += RDa * Xb.transpose();
    o.b1() += RDa.rowwise().sum();
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = i;
    return r;
}

std::vector<std::uint32_t> gather_labels(const Samples& s, std::span<const std::size_t> rows) {
    std::vector<std::uint32_t> y(rows.size());
    for (std::size_t j = 0; j < rows.size(); ++j) y[j] = s.y[rows[j]];
    return y;
}

}  // namespace

Vector forward(const ModelSpec& spec, const ParamVector& theta, const Eigen::Ref<const Vector>& x,
               const DropoutMask* mask) {
    check_theta(spec, theta);
    if (static_cast<std::size_t>(x.size()) != spec.input_dim)
        throw InvalidArgument("input has length " + std::to_string(x.size()) + ", model expects " +
                              std::to_string(spec.input_dim));
    Matrix Mb;
    if (mask) {
        if (!spec.has_dropout()) throw InvalidArgument("dropout mask given for an architecture without dropout");
        if (static_cast<std::size_t>(mask->keep.size()) != spec.hidden_dim)
            throw InvalidArgument("dropout mask length does not match hidden_dim");
        Mb = mask->keep;
    }
    const Matrix Xb = x;
    return forward_block(spec, theta, Xb, {}, mask ? &Mb : nullptr).P.col(0);
}

Matrix predict_proba(const ModelSpec& spec, const ParamVector& theta, const Samples& s) {
    check_theta(spec, theta);
    check_samples(spec, s);
    Matrix P(static_cast<Index>(spec.n_classes), static_cast<Index>(s.size()));
    const std::size_t nb = detail::block_count(s.size());
    parallel_for(nb, [&](std::size_t b) {
        const auto [lo, hi] = detail::block_range(b, s.size());
        const Matrix Xb = s.X.middleCols(static_cast<Index>(lo), static_cast<Index>(hi - lo));
        P.middleCols(static_cast<Index>(lo), static_cast<Index>(hi - lo)) = forward_block(spec, theta, Xb, {}, nullptr).P;
    });
    return P;
}

LossGrad ce_loss_grad_sum(const ModelSpec& spec, const ParamVector& theta, const Samples& s,
                          std::span<const std::size_t> rows, const Matrix* masks) {
    check_theta(spec, theta);
    check_samples(spec, s);
    if (masks) {
        if (!spec.has_dropout()) throw InvalidArgument("dropout masks given for an architecture without dropout");
        if (static_cast<std::size_t>(masks->rows()) != spec.hidden_dim ||
            static_cast<std::size_t>(masks->cols()) != rows.size())
            throw InvalidArgument("dropout mask matrix has the wrong shape");
    }
    for (auto r : rows)
        if (r >= s.size()) throw InvalidArgument("row index out of range");

    const auto P = static_cast<Index>(spec.param_count());
    struct Partial {
        double ce = 0.0;
        ParamVector g;
        Partial operator+(const Partial& o) const { return {ce + o.ce, g + o.g}; }
    };
    if (rows.empty()) return {0.0, ParamVector::Zero(P)};
    const Partial total = detail::pairwise_block_reduce<Partial>(rows.size(), [&](std::size_t lo, std::size_t hi) {
        const auto sub = rows.subspan(lo, hi - lo);
        const Matrix Xb = gather(s.X, sub);
        const auto yb = gather_labels(s, sub);
        Matrix Mb;
        if (masks) Mb = masks->middleCols(static_cast<Index>(lo), static_cast<Index>(hi - lo));
        const Block blk = forward_block(spec, theta, Xb, yb, masks ? &Mb : nullptr);
        Partial part{blk.ce.sum(), ParamVector::Zero(P)};
        accumulate_grad(spec, theta, Xb, blk, residual(blk.P, yb), masks ? &Mb : nullptr, part.g);
        return part;
    });
    return {total.ce, total.g};
}

double loss(const ModelSpec& spec, const ParamVector& theta, const Samples& s, std::span<const std::size_t> rows) {
    if (rows.empty()) throw InvalidArgument("loss of an empty batch");
    const LossGrad lg = ce_loss_grad_sum(spec, theta, s, rows);
    return lg.ce_sum / static_cast<double>(rows.size()) + 0.5 * spec.weight_decay * theta.squaredNorm();
}

double loss(const ModelSpec& spec, const ParamVector& theta, const Samples& s) {
    const auto rows = all_rows(s.size());
    return loss(spec, theta, s, rows);
}

ParamVector grad(const ModelSpec& spec, const ParamVector& theta, const Samples& s, std::span<const std::size_t> rows) {
    if (rows.empty()) throw InvalidArgument("gradient of an empty batch");
    const LossGrad lg = ce_loss_grad_sum(spec, theta, s, rows);
    return lg.grad_sum / static_cast<double>(rows.size()) + spec.weight_decay * theta;
}

ParamVector grad(const ModelSpec& spec, const ParamVector& theta, const Samples& s) {
    const auto rows = all_rows(s.size());
    return grad(spec, theta, s, rows);
}

Matrix per_sample_grads(const ModelSpec& spec, const ParamVector& theta, const Samples& s) {
    check_theta(spec, theta);
    check_samples(spec, s);
    const std::size_t D = spec.input_dim, C = spec.n_classes, H = spec.hidden_dim;
    Matrix out(static_cast<Index>(spec.param_count()), static_cast<Index>(s.size()));
    // One sample at a time: blocked products may round a column differently depending on its
    // position, and identical trials must get identical gradients.
    parallel_for(s.size(), [&](std::size_t i) {
        const Matrix x = s.X.col(static_cast<Index>(i));
        const std::span<const std::uint32_t> yi(s.y.data() + i, 1);
        const Block blk = forward_block(spec, theta, x, yi, nullptr);
        const Matrix g = residual(blk.P, yi);
        OutViews o{D, C, H, out.col(static_cast<Index>(i)).data()};
        if (spec.arch == Arch::LinearSoftmax) {
            o.W() = g * x.transpose();
            o.b() = g;
        } else {
            const auto t = views(spec, theta);
            const Matrix da = (t.W2().transpose() * g).cwiseProduct((1.0 - blk.Hh.array().square()).matrix());
            o.W1() = da * x.transpose();
            o.b1() = da;
            o.W2() = g * blk.Hh.transpose();
            o.b2() = g;
        }
    });
    return out;
}

ParamVector hvp(const ModelSpec& spec, const ParamVector& theta, const Samples& s, const ParamVector& v,
                double damping) {
    check_theta(spec, theta);
    check_samples(spec, s);
    if (v.size() != theta.size()) throw InvalidArgument("hvp direction has the wrong length");
    if (!(damping >= 0.0)) throw InvalidArgument("damping must be >= 0");
    const auto P = static_cast<Index>(spec.param_count());
    ParamVector out = s.empty() ? ParamVector::Zero(P) : detail::pairwise_block_reduce<ParamVector>(s.size(), [&](std::size_t lo, std::size_t hi) {
        const Matrix Xb = s.X.middleCols(static_cast<Index>(lo), static_cast<Index>(hi - lo));
        const std::span<const std::uint32_t> yb(s.y.data() + lo, hi - lo);
        ParamVector part = ParamVector::Zero(P);
        accumulate_hvp(spec, theta, v, Xb, yb, part);
        return part;
    });
    const double diag = static_cast<double>(s.size()) * spec.weight_decay + damping;
    if (diag != 0.0) out += diag * v;
    return out;
}

namespace {

Matrix linear_hessian(const ModelSpec& spec, const ParamVector& theta, const Samples& s) {
    const std::size_t D = spec.input_dim, C = spec.n_classes;
    const auto n = static_cast<Index>(s.size());
    const Matrix P = predict_proba(spec, theta, s);
    Matrix Zt(static_cast<Index>(D + 1), n);
    Zt.topRows(static_cast<Index>(D)) = s.X;
    Zt.row(static_cast<Index>(D)).setOnes();

    auto index = [&](std::size_t c, std::size_t k) { return static_cast<Index>(k < D ? c * D + k : C * D + c); };

    const auto Pn = static_cast<Index>(spec.param_count());
    Matrix H = Matrix::Zero(Pn, Pn);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t c2 = c; c2 < C; ++c2) {
            Vector w(n);
            for (Index i = 0; i < n; ++i) {
                const double pc = P(static_cast<Index>(c), i), pc2 = P(static_cast<Index>(c2), i);
                w[i] = c == c2 ? pc * (1.0 - pc) : -pc * pc2;
            }
            const Matrix M = Zt * w.asDiagonal() * Zt.transpose();
            for (std::size_t k = 0; k <= D; ++k) {
                for (std::size_t k2 = 0; k2 <= D; ++k2) {
                    // Same-class blocks use the upper triangle of M so H is exactly symmetric.
                    const double val = (c == c2 && k2 < k) ? M(static_cast<Index>(k2), static_cast<Index>(k))
                                                           : M(static_cast<Index>(k), static_cast<Index>(k2));
                    H(index(c, k), index(c2, k2)) = val;
                    H(index(c2, k2), index(c, k)) = val;
                }
            }
        }
    }
    return H;
}

Matrix mlp_hessian(const ModelSpec& spec, const ParamVector& theta, const Samples& s) {
    const std::size_t D = spec.input_dim, C = spec.n_classes, Hd = spec.hidden_dim;
    const auto Pn = static_cast<Index>(spec.param_count());
    const auto t = views(spec, theta);
    const std::size_t oW1 = 0, ob1 = Hd * D, oW2 = Hd * D + Hd, ob2 = Hd * D + Hd + C * Hd;

    Matrix H = Matrix::Zero(Pn, Pn);
    Matrix J(static_cast<Index>(C), Pn);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const Vector x = s.X.col(static_cast<Index>(i));
        const Vector a = t.W1() * x + t.b1();
        const Vector h = a.array().tanh().matrix();
        const Vector dt = (1.0 - h.array().square()).matrix();
        Vector z = t.W2() * h + t.b2();
        z.array() -= z.maxCoeff();
        Vector p = z.array().exp().matrix();
        p /= p.sum();
        Vector dz = p;
        dz[s.y[i]] -= 1.0;
        const Vector dh = t.W2().transpose() * dz;

        // Jacobian of the logits with respect to every parameter.
        J.setZero();
        for (std::size_t c = 0; c < C; ++c) {
            const auto ci = static_cast<Index>(c);
            for (std::size_t j = 0; j < Hd; ++j) {
                const double g = t.W2()(ci, static_cast<Index>(j)) * dt[static_cast<Index>(j)];
                for (std::size_t k = 0; k < D; ++k) J(ci, static_cast<Index>(oW1 + j * D + k)) = g * x[static_cast<Index>(k)];
                J(ci, static_cast<Index>(ob1 + j)) = g;
                J(ci, static_cast<Index>(oW2 + c * Hd + j)) = h[static_cast<Index>(j)];
            }
            J(ci, static_cast<Index>(ob2 + c)) = 1.0;
        }
        const Matrix S = Matrix(p.asDiagonal()) - p * p.transpose();
        H.noalias() += J.transpose() * (S * J);

        // Curvature of the logits themselves, weighted by the residual.
        for (std::size_t j = 0; j < Hd; ++j) {
            const auto jj = static_cast<Index>(j);
            const double r = dh[jj] * (-2.0 * h[jj] * dt[jj]);
            auto idx = [&](std::size_t k) { return static_cast<Index>(k < D ? oW1 + j * D + k : ob1 + j); };
            auto xt = [&](std::size_t k) { return k < D ? x[static_cast<Index>(k)] : 1.0; };
            for (std::size_t k = 0; k <= D; ++k)
                for (std::size_t k2 = 0; k2 <= D; ++k2) H(idx(k), idx(k2)) += r * xt(k) * xt(k2);
            for (std::size_t c = 0; c < C; ++c) {
                const auto w2 = static_cast<Index>(oW2 + c * Hd + j);
                const double coef = dz[static_cast<Index>(c)] * dt[jj];
                for (std::size_t k = 0; k <= D; ++k) {
                    H(w2, idx(k)) += coef * xt(k);
                    H(idx(k), w2) += coef * xt(k);
                }
            }
        }
    }
    return (H + H.transpose()) * 0.5;
}

}  // namespace

Matrix exact_hessian(const ModelSpec& spec, const ParamVector& theta, const Samples& s, double damping,
                     std::size_t cap) {
    check_theta(spec, theta);
    check_samples(spec, s);
    if (!(damping >= 0.0)) throw InvalidArgument("damping must be >= 0");
    if (spec.param_count() > cap)
        throw CapacityError("dense Hessian needs P = " + std::to_string(spec.param_count()) + " > cap " +
                            std::to_string(cap));
    const auto Pn = static_cast<Index>(spec.param_count());
    Matrix H = s.empty() ? Matrix::Zero(Pn, Pn)
                         : (spec.arch == Arch::LinearSoftmax ? linear_hessian(spec, theta, s) : mlp_hessian(spec, theta, s));
    H.diagonal().array() += static_cast<double>(s.size()) * spec.weight_decay + damping;
    return H;
}

namespace {
constexpr char kParamMagic[4] = {'P', 'R', 'M', 'V'};
}

std::vector<std::uint8_t> encode_params(const ParamVector& theta) {
    detail::ByteWriter w;
    w.bytes(kParamMagic, 4);
    w.u32(kParamFormatVersion);
    w.u64(static_cast<std::uint64_t>(theta.size()));
    for (Index i = 0; i < theta.size(); ++i) w.f64(theta[i]);
    return w.take();
}

ParamVector decode_params(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    auto magic = r.bytes(4, "magic");
    if (!std::equal(magic.begin(), magic.end(), kParamMagic))
        throw ParseError(ParseErrorKind::BadMagic, 0, "expected PRMV");
    const std::size_t version_at = r.offset();
    const std::uint32_t version = r.u32("version");
    if (version != kParamFormatVersion)
        throw ParseError(ParseErrorKind::VersionMismatch, version_at, "got version " + std::to_string(version));
    const std::size_t count_at = r.offset();
    const std::uint64_t P = r.u64("parameter count");
    if (P > (std::uint64_t{1} << 60))
        throw ParseError(ParseErrorKind::DimOverflow, count_at, "parameter count too large");
    r.need(P * 8, "parameter values");
    ParamVector theta(static_cast<Index>(P));
    for (Index i = 0; i < theta.size(); ++i) theta[i] = r.f64("parameter values");
    if (r.remaining() != 0) throw ParseError(ParseErrorKind::BadValue, r.offset(), "trailing bytes after payload");
    return theta;
}

void save_params(const ParamVector& theta, const std::filesystem::path& path) {
    detail::write_file(path, encode_params(theta));
}

ParamVector load_params(const std::filesystem::path& path) { return decode_params(detail::read_file(path)); }

}  // namespace dsrefine
