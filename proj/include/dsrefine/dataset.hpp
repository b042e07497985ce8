#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace dsrefine {

/// One labeled multi-channel recording. `data` is channel-major,
/// n_channels x n_timepoints, with the dimensions held by the parent Dataset.
struct Trial {
    std::vector<float> data;
    std::uint32_t label = 0;
    std::uint32_t subject_id = 0;

    friend bool operator==(const Trial&, const Trial&) = default;
};

struct Dataset {
    std::uint32_t n_channels = 0;
    std::uint32_t n_timepoints = 0;
    std::uint32_t n_classes = 0;
    std::vector<Trial> trials;
    /// Ground truth of injected label noise (1 = corrupted). Synthetic data only.
    std::optional<std::vector<std::uint8_t>> noise_mask;

    std::size_t size() const noexcept { return trials.size(); }
    bool empty() const noexcept { return trials.empty(); }
    std::size_t trial_length() const noexcept { return std::size_t{n_channels} * n_timepoints; }

    /// Sorted, de-duplicated subject ids.
    std::vector<std::uint32_t> subjects() const;

    /// Trials at `indices`, in the order given; the noise mask follows along.
    Dataset subset(std::span<const std::size_t> indices) const;

    /// Throws InvalidArgument if any structural invariant is broken.
    void validate() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SyntheticSpec {
    std::uint32_t n_subjects = 9;
    std::uint32_t trials_per_subject = 32;
    std::uint32_t n_channels = 3;
    std::uint32_t n_timepoints = 128;
    std::uint32_t n_classes = 2;
    double class_separation = 2.0;
    std::uint64_t seed = 0;
};

/// Class-dependent sinusoids in unit Gaussian noise with per-subject offsets and gains.
/// Labels cycle through the classes within each subject, so classes are balanced.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Reassigns round(ratio * n) uniformly chosen labels to a different class, uniformly.
/// Returns a copy with noise_mask marking the changed trials.
Dataset inject_label_noise(const Dataset& d, double ratio, std::uint64_t seed);

enum class EmsInitMean { FirstSample };

struct EmsConfig {
    double alpha = 0.999;
    double eps = 1e-8;
    EmsInitMean init_mean = EmsInitMean::FirstSample;
    double init_var = 1.0;

    void validate() const;
};

/// Exponential moving standardization of one channel:
///   mu_k  = (1 - a) x_k + a mu_{k-1}
///   var_k = (1 - a) (x_k - mu_k)^2 + a var_{k-1}
///   out_k = (x_k - mu_k) / sqrt(max(var_k, eps))
/// with mu_{-1} = x_0 and var_{-1} = init_var.
std::vector<double> ems_standardize_channel(std::span<const double> x, const EmsConfig& cfg);

/// Per-channel EMS of a trial with the given channel count.
Trial ems_standardize(const Trial& t, std::uint32_t n_channels, const EmsConfig& cfg);

/// EMS applied to every trial (parallel over trials).
Dataset ems_standardize(const Dataset& d, const EmsConfig& cfg);

/// (train, test) where test holds every trial of `held_out_subject`.
std::pair<Dataset, Dataset> split_loso(const Dataset& d, std::uint32_t held_out_subject);

// Binary trial format, little-endian:
//   "EEGD" | version u32 = 1 | n_trials u32 | n_channels u32 | n_timepoints u32 |
//   n_classes u32 | has_noise_mask u8 |
//   per trial: subject_id u32, label u32, f32 data[n_channels * n_timepoints] |
//   if has_noise_mask: n_trials bytes of 0/1
inline constexpr std::uint32_t kDatasetFormatVersion = 1;

std::vector<std::uint8_t> encode_dataset(const Dataset& d);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace dsrefine
