#include <doctest.h>

#include <cmath>
#include <random>

#include "dsrefine/dataset.hpp"
#include "dsrefine/errors.hpp"
#include "dsrefine/trainer.hpp"
#include "support.hpp"

using namespace dsrefine;

namespace {

SyntheticSpec small_spec(std::uint64_t seed = 7) {
    SyntheticSpec s;
    s.n_channels = 3;
    s.n_timepoints = 128;
    s.seed = seed;
    return s;
}

// Straight transcription of the recursion, kept deliberately naive.
std::vector<double> ems_reference(const std::vector<double>& x, double a, double eps, double var0) {
    std::vector<double> out(x.size());
    double mu_prev = x[0], var_prev = var0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        double mu = (1 - a) * x[k] + a * mu_prev;
        double var = (1 - a) * (x[k] - mu) * (x[k] - mu) + a * var_prev;
        out[k] = (x[k] - mu) / std::sqrt(std::max(var, eps));
        mu_prev = mu;
        var_prev = var;
    }
    return out;
}

std::vector<std::uint8_t> corrupt_u32(std::vector<std::uint8_t> b, std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
    return b;
}

}  // namespace

TEST_CASE("generate_synthetic counts and determinism") {
    const Dataset a = generate_synthetic(small_spec());
    CHECK(a.size() == 288);
    CHECK(a.n_channels == 3);
    CHECK(a.n_timepoints == 128);
    CHECK(a.trials[0].data.size() == 384);
    CHECK(a.subjects().size() == 9);
    CHECK(a == generate_synthetic(small_spec()));
    CHECK_FALSE(a == generate_synthetic(small_spec(8)));
    CHECK_NOTHROW(a.validate());

    SyntheticSpec bad = small_spec();
    bad.n_subjects = 0;
    CHECK_THROWS_AS(generate_synthetic(bad), InvalidArgument);
    bad = small_spec();
    bad.n_timepoints = 0;
    CHECK_THROWS_AS(generate_synthetic(bad), InvalidArgument);
}

TEST_CASE("zero separation data is learned at chance level") {
    SyntheticSpec s = small_spec(3);
    s.n_timepoints = 16;
    s.class_separation = 0.0;
    const Dataset d = ems_standardize(generate_synthetic(s), EmsConfig{});
    ModelSpec m;
    m.input_dim = d.trial_length();
    m.n_classes = 2;
    TrainConfig tc;
    tc.epochs = 40;
    tc.warmup_epochs = 4;
    tc.lr_peak = 1e-2;
    tc.batch_size = 32;
    double acc = 0.0;
    for (auto subj : d.subjects()) {
        auto [train_d, test_d] = split_loso(d, subj);
        acc += evaluate(m, train(m, train_d, tc).theta, test_d);
    }
    acc /= static_cast<double>(d.subjects().size());
    CHECK(std::abs(acc - 0.5) <= 0.1);
}

TEST_CASE("inject_label_noise") {
    SyntheticSpec s = small_spec();
    s.n_timepoints = 4;
    const Dataset d = generate_synthetic(s);

    const Dataset same = inject_label_noise(d, 0.0, 1);
    REQUIRE(same.noise_mask);
    CHECK(std::count(same.noise_mask->begin(), same.noise_mask->end(), 1) == 0);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(same.trials[i] == d.trials[i]);

    const Dataset all = inject_label_noise(d, 1.0, 1);
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(all.trials[i].label != d.trials[i].label);
        CHECK((*all.noise_mask)[i] == 1);
    }

    Dataset hundred = d.subset(std::vector<std::size_t>{});
    for (std::size_t i = 0; i < 100; ++i) hundred.trials.push_back(d.trials[i]);
    const Dataset n1 = inject_label_noise(hundred, 0.2, 42);
    CHECK(std::count(n1.noise_mask->begin(), n1.noise_mask->end(), 1) == 20);
    CHECK(*n1.noise_mask == *inject_label_noise(hundred, 0.2, 42).noise_mask);
    for (std::size_t i = 0; i < 100; ++i)
        CHECK(((*n1.noise_mask)[i] == 1) == (n1.trials[i].label != hundred.trials[i].label));

    SyntheticSpec four = s;
    four.n_classes = 4;
    const Dataset d4 = generate_synthetic(four);
    const Dataset n4 = inject_label_noise(d4, 0.5, 3);
    for (std::size_t i = 0; i < d4.size(); ++i) {
        CHECK(n4.trials[i].label < 4);
        CHECK(((*n4.noise_mask)[i] == 1) == (n4.trials[i].label != d4.trials[i].label));
    }

    CHECK_THROWS_AS(inject_label_noise(d, -0.1, 0), InvalidArgument);
    CHECK_THROWS_AS(inject_label_noise(d, 1.5, 0), InvalidArgument);
}

TEST_CASE("ems worked two-point example") {
    EmsConfig cfg;
    cfg.alpha = 0.5;
    cfg.init_var = 1.0;
    const std::vector<double> x{1.0, 2.0};
    const auto out = ems_standardize_channel(x, cfg);
    CHECK(out[0] == 0.0);
    CHECK(std::abs(out[1] - 0.8165) <= 1e-4);
}

TEST_CASE("ems matches reference recursion") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd(0.0, 3.0);
    for (double alpha : {0.0, 0.5, 0.9, 0.999, 1.0}) {
        EmsConfig cfg;
        cfg.alpha = alpha;
        cfg.init_var = 0.7;
        std::vector<double> x(500);
        for (auto& v : x) v = nd(rng) + 5.0;
        const auto got = ems_standardize_channel(x, cfg);
        const auto want = ems_reference(x, alpha, cfg.eps, cfg.init_var);
        double worst = 0;
        for (std::size_t k = 0; k < x.size(); ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
        CHECK(worst <= 1e-12);
    }
}

TEST_CASE("ems constant channel maps to zero and trial layout is per channel") {
    const std::vector<double> c(64, 3.25);
    for (double v : ems_standardize_channel(c, EmsConfig{})) CHECK(v == 0.0);

    Trial t;
    t.data = {1, 2, 3, 4, 7, 7, 7, 7};  // channel-major, 2 channels x 4 timepoints
    const Trial out = ems_standardize(t, 2, EmsConfig{});
    REQUIRE(out.data.size() == 8);
    for (int k = 4; k < 8; ++k) CHECK(out.data[k] == 0.0f);
    const auto ch0 = ems_standardize_channel(std::vector<double>{1, 2, 3, 4}, EmsConfig{});
    for (int k = 0; k < 4; ++k) CHECK(out.data[k] == static_cast<float>(ch0[k]));

    t.data[2] = std::nanf("");
    CHECK_THROWS_AS(ems_standardize(t, 2, EmsConfig{}), NumericalError);
}

TEST_CASE("split_loso") {
    SyntheticSpec s = small_spec();
    s.n_timepoints = 4;
    const Dataset d = generate_synthetic(s);
    auto [train_d, test_d] = split_loso(d, 3);
    CHECK(train_d.size() == 256);
    CHECK(test_d.size() == 32);
    for (const auto& t : test_d.trials) CHECK(t.subject_id == 3);
    for (const auto& t : train_d.trials) CHECK(t.subject_id != 3);
    CHECK_THROWS_AS(split_loso(d, 99), NotFound);

    s.n_subjects = 1;
    const Dataset one = generate_synthetic(s);
    auto [tr1, te1] = split_loso(one, one.trials[0].subject_id);
    CHECK(tr1.empty());
    CHECK(te1.size() == one.size());
    ModelSpec m;
    m.input_dim = one.trial_length();
    m.n_classes = 2;
    CHECK_THROWS_AS(train(m, tr1, TrainConfig{}), InvalidArgument);
}

TEST_CASE("dataset file roundtrip and parse errors") {
    SyntheticSpec s = small_spec();
    s.n_timepoints = 8;
    const Dataset d = inject_label_noise(generate_synthetic(s), 0.2, 5);
    const auto dir = testing::scratch_dir("dataset");
    save_dataset(d, dir / "d.eegd");
    CHECK(load_dataset(dir / "d.eegd") == d);

    const auto bytes = encode_dataset(d);
    auto kind_of = [](std::vector<std::uint8_t> b) {
        try {
            (void)decode_dataset(b);
        } catch (const ParseError& e) {
            return std::pair{e.kind(), e.offset()};
        }
        FAIL("decode succeeded");
        return std::pair{ParseErrorKind::BadValue, std::size_t{0}};
    };

    auto bad = bytes;
    std::copy_n("XXXX", 4, bad.begin());
    CHECK(kind_of(bad) == std::pair{ParseErrorKind::BadMagic, std::size_t{0}});
    CHECK(kind_of(corrupt_u32(bytes, 4, 2)).first == ParseErrorKind::VersionMismatch);

    // Header is 25 bytes, each trial 8 + 4 * 24.
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 25 + 104 + 50);
    const auto [k, off] = kind_of(cut);
    CHECK(k == ParseErrorKind::Truncated);
    CHECK(off >= 25 + 104);

    CHECK(kind_of(corrupt_u32(bytes, 12, 0xFFFFFFFFu)).first == ParseErrorKind::DimOverflow);
    CHECK(kind_of(corrupt_u32(bytes, 25 + 4, 9)).first == ParseErrorKind::BadValue);

    try {
        (void)decode_dataset(bad);
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("offset 0") != std::string::npos);
    }
    CHECK_THROWS_AS(load_dataset(dir / "missing.eegd"), IoError);
}
