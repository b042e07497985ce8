#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "dsrefine/parallel.hpp"

namespace dsrefine::detail {

// Fixed block size: partial sums depend only on n, never on the worker count.
inline constexpr std::size_t kReduceBlock = 64;

inline std::size_t block_count(std::size_t n) { return (n + kReduceBlock - 1) / kReduceBlock; }

inline std::pair<std::size_t, std::size_t> block_range(std::size_t b, std::size_t n) {
    const std::size_t lo = b * kReduceBlock;
    return {lo, std::min(n, lo + kReduceBlock)};
}

/// Evaluates fn(lo, hi) on fixed-size blocks of [0, n) in parallel, then sums the partials
/// with a pairwise tree. Requires n > 0.
template <typename T, typename F>
T pairwise_block_reduce(std::size_t n, F&& fn) {
    const std::size_t nb = block_count(n);
    std::vector<T> parts(nb);
    parallel_for(nb, [&](std::size_t b) {
        const auto [lo, hi] = block_range(b, n);
        parts[b] = fn(lo, hi);
    });
    for (std::size_t width = 1; width < nb; width *= 2)
        for (std::size_t i = 0; i + width < nb; i += 2 * width) parts[i] = parts[i] + parts[i + width];
    return std::move(parts[0]);
}

}  // namespace dsrefine::detail
