#include "dsrefine/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "binary_io.hpp"
#include "dsrefine/errors.hpp"
#include "dsrefine/parallel.hpp"
#include "dsrefine/rng.hpp"

namespace dsrefine {

std::vector<std::uint32_t> Dataset::subjects() const {
    std::vector<std::uint32_t> ids;
    ids.reserve(trials.size());
    for (const auto& t : trials) ids.push_back(t.subject_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.n_channels = n_channels;
    out.n_timepoints = n_timepoints;
    out.n_classes = n_classes;
    out.trials.reserve(indices.size());
    if (noise_mask) out.noise_mask.emplace().reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= trials.size()) throw InvalidArgument("subset index " + std::to_string(i) + " out of range");
        out.trials.push_back(trials[i]);
        if (noise_mask) out.noise_mask->push_back((*noise_mask)[i]);
    }
    return out;
}

void Dataset::validate() const {
    if (n_classes == 0) throw InvalidArgument("dataset has n_classes = 0");
    const std::size_t len = trial_length();
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const auto& t = trials[i];
        if (t.data.size() != len)
            throw InvalidArgument("trial " + std::to_string(i) + " has " + std::to_string(t.data.size()) +
                                  " samples, expected " + std::to_string(len));
        if (t.label >= n_classes)
            throw InvalidArgument("trial " + std::to_string(i) + " label " + std::to_string(t.label) +
                                  " >= n_classes " + std::to_string(n_classes));
        for (float v : t.data)
            if (!std::isfinite(v)) throw InvalidArgument("trial " + std::to_string(i) + " contains NaN/Inf");
    }
    if (noise_mask && noise_mask->size() != trials.size())
        throw InvalidArgument("noise_mask length does not match trial count");
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_subjects == 0 || spec.trials_per_subject == 0 || spec.n_channels == 0 || spec.n_timepoints == 0)
        throw InvalidArgument("synthetic spec: all counts must be >= 1");
    if (spec.n_classes < 2) throw InvalidArgument("synthetic spec: n_classes must be >= 2");
    if (!std::isfinite(spec.class_separation) || spec.class_separation < 0)
        throw InvalidArgument("synthetic spec: class_separation must be finite and >= 0");

    Rng rng(derive_seed(spec.seed, {stream::kSynthetic}));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const std::uint32_t C = spec.n_classes, K = spec.n_channels, T = spec.n_timepoints;

    // Class templates: frequency grows with the class index, per-channel phase and amplitude.
    std::vector<double> phase(std::size_t{C} * K), amp(std::size_t{C} * K);
    for (std::size_t i = 0; i < phase.size(); ++i) {
        phase[i] = 2.0 * std::numbers::pi * unit(rng);
        amp[i] = 0.5 + 0.5 * unit(rng);
    }

    Dataset d;
    d.n_channels = K;
    d.n_timepoints = T;
    d.n_classes = C;
    d.noise_mask = std::vector<std::uint8_t>(std::size_t{spec.n_subjects} * spec.trials_per_subject, 0);
    d.trials.reserve(d.noise_mask->size());

    std::vector<double> offset(K);
    for (std::uint32_t s = 0; s < spec.n_subjects; ++s) {
        for (auto& o : offset) o = gauss(rng);
        const double gain = 0.8 + 0.4 * unit(rng);
        for (std::uint32_t j = 0; j < spec.trials_per_subject; ++j) {
            Trial t;
            t.subject_id = s;
            t.label = j % C;
            t.data.resize(std::size_t{K} * T);
            const double jitter = 1.0 + 0.1 * gauss(rng);
            const double freq = 2.0 + t.label;
            for (std::uint32_t ch = 0; ch < K; ++ch) {
                const std::size_t cls = std::size_t{t.label} * K + ch;
                for (std::uint32_t k = 0; k < T; ++k) {
                    const double wave =
                        std::sin(2.0 * std::numbers::pi * freq * k / static_cast<double>(T) + phase[cls]);
                    const double v =
                        offset[ch] + gain * jitter * spec.class_separation * amp[cls] * wave + gauss(rng);
                    t.data[std::size_t{ch} * T + k] = static_cast<float>(v);
                }
            }
            d.trials.push_back(std::move(t));
        }
    }
    return d;
}

Dataset inject_label_noise(const Dataset& d, double ratio, std::uint64_t seed) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw InvalidArgument("noise ratio must lie in [0, 1]");
    if (d.empty()) throw InvalidArgument("cannot inject label noise into an empty dataset");
    if (d.n_classes < 2 && ratio > 0) throw InvalidArgument("label noise needs at least two classes");

    const std::size_t n = d.size();
    const auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));

    Rng rng(derive_seed(seed, {stream::kLabelNoise}));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    Dataset out = d;
    out.noise_mask = std::vector<std::uint8_t>(n, 0);
    std::uniform_int_distribution<std::uint32_t> other(0, d.n_classes - 2);
    for (std::size_t r = 0; r < k; ++r) {
        const std::size_t i = order[r];
        const std::uint32_t old = out.trials[i].label;
        const std::uint32_t draw = other(rng);
        out.trials[i].label = draw >= old ? draw + 1 : draw;
        (*out.noise_mask)[i] = 1;
    }
    return out;
}

void EmsConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("ems alpha must lie in [0, 1]");
    if (!(eps > 0.0)) throw InvalidArgument("ems eps must be > 0");
    if (!(init_var > 0.0)) throw InvalidArgument("ems init_var must be > 0");
}

std::vector<double> ems_standardize_channel(std::span<const double> x, const EmsConfig& cfg) {
    cfg.validate();
    if (x.empty()) throw InvalidArgument("ems: empty channel");
    for (double v : x)
        if (!std::isfinite(v)) throw NumericalError("ems: input contains NaN/Inf");

    const double a = cfg.alpha, b = 1.0 - cfg.alpha;
    std::vector<double> out(x.size());
    double mu = x[0];
    double var = cfg.init_var;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mu = b * x[k] + a * mu;
        const double dev = x[k] - mu;
        var = b * dev * dev + a * var;
        out[k] = dev / std::sqrt(std::max(var, cfg.eps));
    }
    return out;
}

Trial ems_standardize(const Trial& t, std::uint32_t n_channels, const EmsConfig& cfg) {
    if (t.data.empty() || n_channels == 0) throw InvalidArgument("ems: empty trial");
    if (t.data.size() % n_channels != 0) throw InvalidArgument("ems: trial length not divisible by channel count");
    const std::size_t T = t.data.size() / n_channels;

    Trial out = t;
    std::vector<double> channel(T);
    for (std::size_t ch = 0; ch < n_channels; ++ch) {
        const float* src = t.data.data() + ch * T;
        std::copy(src, src + T, channel.begin());
        const auto z = ems_standardize_channel(channel, cfg);
        std::transform(z.begin(), z.end(), out.data.begin() + static_cast<std::ptrdiff_t>(ch * T),
                       [](double v) { return static_cast<float>(v); });
    }
    return out;
}

Dataset ems_standardize(const Dataset& d, const EmsConfig& cfg) {
    cfg.validate();
    Dataset out = d;
    parallel_for(d.size(), [&](std::size_t i) { out.trials[i] = ems_standardize(d.trials[i], d.n_channels, cfg); });
    return out;
}

std::pair<Dataset, Dataset> split_loso(const Dataset& d, std::uint32_t held_out_subject) {
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < d.size(); ++i)
        (d.trials[i].subject_id == held_out_subject ? test_idx : train_idx).push_back(i);
    if (test_idx.empty()) throw NotFound("subject " + std::to_string(held_out_subject) + " not present in dataset");
    return {d.subset(train_idx), d.subset(test_idx)};
}

namespace {
constexpr char kMagic[4] = {'E', 'E', 'G', 'D'};
// Hard cap on samples per trial; protects against absurd headers.
constexpr std::uint64_t kMaxTrialSamples = std::uint64_t{1} << 31;
}  // namespace

std::vector<std::uint8_t> encode_dataset(const Dataset& d) {
    d.validate();
    if (d.size() > std::numeric_limits<std::uint32_t>::max()) throw InvalidArgument("too many trials to encode");
    detail::ByteWriter w;
    w.bytes(kMagic, 4);
    w.u32(kDatasetFormatVersion);
    w.u32(static_cast<std::uint32_t>(d.size()));
    w.u32(d.n_channels);
    w.u32(d.n_timepoints);
    w.u32(d.n_classes);
    w.u8(d.noise_mask ? 1 : 0);
    for (const auto& t : d.trials) {
        w.u32(t.subject_id);
        w.u32(t.label);
        for (float v : t.data) w.f32(v);
    }
    if (d.noise_mask)
        for (auto m : *d.noise_mask) w.u8(m ? 1 : 0);
    return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    auto magic = r.bytes(4, "magic");
    if (!std::equal(magic.begin(), magic.end(), kMagic)) throw ParseError(ParseErrorKind::BadMagic, 0, "expected EEGD");
    const std::size_t version_at = r.offset();
    const std::uint32_t version = r.u32("version");
    if (version != kDatasetFormatVersion)
        throw ParseError(ParseErrorKind::VersionMismatch, version_at, "got version " + std::to_string(version));

    Dataset d;
    const std::uint32_t n_trials = r.u32("n_trials");
    const std::size_t dims_at = r.offset();
    d.n_channels = r.u32("n_channels");
    d.n_timepoints = r.u32("n_timepoints");
    d.n_classes = r.u32("n_classes");
    const std::size_t mask_flag_at = r.offset();
    const std::uint8_t has_mask = r.u8("has_noise_mask");
    if (has_mask > 1) throw ParseError(ParseErrorKind::BadValue, mask_flag_at, "has_noise_mask must be 0 or 1");

    const std::uint64_t samples = std::uint64_t{d.n_channels} * d.n_timepoints;
    if (samples > kMaxTrialSamples)
        throw ParseError(ParseErrorKind::DimOverflow, dims_at, std::to_string(samples) + " samples per trial");
    const std::uint64_t record = 8 + 4 * samples;
    // Compare in division form so the product cannot wrap.
    if (n_trials != 0 && record > (std::numeric_limits<std::uint64_t>::max() - 64) / n_trials)
        throw ParseError(ParseErrorKind::DimOverflow, dims_at, "payload size overflows");
    if (d.n_classes == 0) throw ParseError(ParseErrorKind::BadValue, dims_at + 8, "n_classes must be >= 1");

    d.trials.reserve(std::min<std::uint64_t>(n_trials, r.remaining() / std::max<std::uint64_t>(record, 1)));
    for (std::uint32_t i = 0; i < n_trials; ++i) {
        Trial t;
        t.subject_id = r.u32("subject_id");
        const std::size_t label_at = r.offset();
        t.label = r.u32("label");
        if (t.label >= d.n_classes)
            throw ParseError(ParseErrorKind::BadValue, label_at, "label " + std::to_string(t.label) + " >= n_classes");
        r.need(4 * samples, "trial data");
        t.data.resize(samples);
        for (auto& v : t.data) {
            const std::size_t at = r.offset();
            v = r.f32("trial data");
            if (!std::isfinite(v)) throw ParseError(ParseErrorKind::BadValue, at, "non-finite sample");
        }
        d.trials.push_back(std::move(t));
    }
    if (has_mask) {
        auto raw = r.bytes(n_trials, "noise mask");
        d.noise_mask.emplace(raw.begin(), raw.end());
        for (std::size_t i = 0; i < raw.size(); ++i)
            if (raw[i] > 1)
                throw ParseError(ParseErrorKind::BadValue, r.offset() - raw.size() + i, "noise mask byte must be 0/1");
    }
    if (r.remaining() != 0) throw ParseError(ParseErrorKind::BadValue, r.offset(), "trailing bytes after payload");
    return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    const auto bytes = encode_dataset(d);
    detail::write_file(path, bytes);
}

Dataset load_dataset(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    return decode_dataset(bytes);
}

}  // namespace dsrefine
