#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dsrefine {

using Rng = std::mt19937_64;

/// splitmix64 finalizer. Used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Stream id for (seed, k1, k2, ...). Order-sensitive, so (s, a, b) != (s, b, a).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept {
    std::uint64_t h = mix64(seed);
    for (std::uint64_t k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
    return h;
}

// Stream tags, so that distinct consumers of one experiment seed never share a stream.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kTrainDropout = 3;
inline constexpr std::uint64_t kMcDropout = 4;
inline constexpr std::uint64_t kRandomPrune = 5;
inline constexpr std::uint64_t kSynthetic = 6;
inline constexpr std::uint64_t kLabelNoise = 7;
}  // namespace stream

}  // namespace dsrefine
