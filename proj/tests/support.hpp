#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dsrefine/dataset.hpp"
#include "dsrefine/model.hpp"

namespace testing {

using dsrefine::Matrix;
using dsrefine::ModelSpec;
using dsrefine::ParamVector;
using dsrefine::Samples;
using dsrefine::Vector;

inline ModelSpec linear_spec(std::size_t d, std::size_t c, double wd = 0.0) {
    ModelSpec s;
    s.arch = dsrefine::Arch::LinearSoftmax;
    s.input_dim = d;
    s.n_classes = c;
    s.weight_decay = wd;
    return s;
}

inline ModelSpec mlp_spec(std::size_t d, std::size_t h, std::size_t c, double wd = 0.0, double rate = 0.5) {
    ModelSpec s;
    s.arch = dsrefine::Arch::MlpDropout;
    s.input_dim = d;
    s.hidden_dim = h;
    s.n_classes = c;
    s.weight_decay = wd;
    s.dropout_rate = rate;
    return s;
}

// Gaussian blobs, class k centred at sep * e_(k mod d).
inline Samples blobs(std::size_t n, std::size_t d, std::size_t c, double sep, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Samples s;
    s.n_classes = c;
    s.X.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto y = static_cast<std::uint32_t>(i % c);
        s.y.push_back(y);
        for (std::size_t j = 0; j < d; ++j) s.X(j, i) = nd(rng) + (j == y % d ? sep : 0.0);
    }
    return s;
}

inline ParamVector random_theta(const ModelSpec& spec, unsigned seed, double scale = 0.5) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    ParamVector t(static_cast<Eigen::Index>(spec.param_count()));
    for (auto& v : t) v = u(rng);
    return t;
}

inline Vector random_vector(Eigen::Index n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Vector v(n);
    for (auto& x : v) x = nd(rng);
    return v;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

inline std::vector<double> ranks(const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
        i = j + 1;
    }
    return r;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("dsrefine_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing
