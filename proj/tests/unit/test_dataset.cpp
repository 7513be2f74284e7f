// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "rr/dataset/degradation.hpp"
#include "rr/dataset/io.hpp"
#include "rr/dataset/split.hpp"
#include "rr/dataset/synthetic.hpp"
#include "rr/metrics/metrics.hpp"

using namespace rr;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("rr_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST(Synthetic, DeterministicPerSeed) {
    const auto a = generate_synthetic_fundus(7, 10, 64);
    const auto b = generate_synthetic_fundus(7, 10, 64);
    ASSERT_EQ(a.size(), 10u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].id, b[i].id);
        EXPECT_TRUE(a[i].image == b[i].image);
        EXPECT_TRUE(a[i].clean == b[i].clean);
        EXPECT_EQ(a[i].labels, b[i].labels);
        EXPECT_EQ(a[i].degradation, b[i].degradation);
    }
    const auto c = generate_synthetic_fundus(8, 10, 64);
    EXPECT_FALSE(a[0].clean == c[0].clean);
}

TEST(Synthetic, PixelsInUnitRange) {
    for (const auto& s : generate_synthetic_fundus(3, 20, 48))
        for (double v : s.image.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
}

TEST(Synthetic, RejectsBadArguments) {
    EXPECT_THROW(generate_synthetic_fundus(1, 0, 64), ArgumentError);
    EXPECT_THROW(generate_synthetic_fundus(1, 5, 31), ArgumentError);
}

TEST(Synthetic, IdentitySpecGivesAllReadable) {
    const auto s = generate_synthetic_fundus(11, 1, 64).front();
    EXPECT_TRUE(derive_labels(DegradationSpec{}, s.anatomy, LabelThresholds{}).all());
}

TEST(Synthetic, CleanImageHasExpectedAnatomy) {
    Anatomy a;
    const Image img = draw_clean_fundus(96, 5, &a);
    auto gray = [&](int y, int x) { return (img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2)) / 3.0; };
    double disc = 0, macula = 0, fundus = 0;
    int nd = 0, nm = 0, nf = 0;
    for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 96; ++x) {
            const double dx = (x + 0.5 - a.disc_cx) / a.disc_rx, dy = (y + 0.5 - a.disc_cy) / a.disc_ry;
            const double mr = std::hypot(x + 0.5 - a.macula_cx, y + 0.5 - a.macula_cy) / a.macula_radius;
            const double fr = std::hypot(x + 0.5 - a.fundus_cx, y + 0.5 - a.fundus_cy) / a.fundus_radius;
            if (dx * dx + dy * dy < 1) disc += gray(y, x), ++nd;
            else if (mr < 0.5) macula += gray(y, x), ++nm;
            else if (fr < 0.9) fundus += gray(y, x), ++nf;
        }
    ASSERT_GT(nd, 0);
    ASSERT_GT(nm, 0);
    // Corners lie outside the fundus circle and stay dark.
    EXPECT_LT(gray(1, 1), 0.05);
    EXPECT_GT(disc / nd, fundus / nf + 0.1);
    EXPECT_LT(macula / nm, fundus / nf);
}

// Positive rates implied by the default category table (degraded fraction 0.6):
//   RO      = 1 - 0.6 * (disc_blur 0.2 + disc_occlusion 0.2 + heavy_blur 0.1)   = 0.70
//   macula  = 1 - 0.6 * (macula_occlusion 0.1 + heavy_blur 0.1 + dark 0.1)       = 0.82
//   retina  = 1 - 0.6 * (heavy_blur 0.1 + dark 0.1 + noisy 0.1)                  = 0.82
//   valid   = 1 - 0.6 * (dark 0.1)                                               = 0.94
TEST(Synthetic, LabelRatesMatchCategoryTable) {
    const auto corpus = generate_synthetic_fundus(2024, 1000, 32);
    std::array<double, kNumLabels> rate{};
    for (const auto& s : corpus)
        for (int k = 0; k < kNumLabels; ++k) rate[static_cast<std::size_t>(k)] += s.labels.get(k) ? 1.0 : 0.0;
    const std::array<double, kNumLabels> expected{0.94, 0.82, 0.70, 0.82};
    for (int k = 0; k < kNumLabels; ++k)
        EXPECT_NEAR(rate[static_cast<std::size_t>(k)] / 1000.0, expected[static_cast<std::size_t>(k)], 0.05)
            << kLabelNames[static_cast<std::size_t>(k)];
}

TEST(Synthetic, RelabelingReproducesStoredLabels) {
    GeneratorConfig cfg;
    for (const auto& s : generate_synthetic_fundus(99, 200, 32, cfg))
        EXPECT_EQ(derive_labels(s.degradation, s.anatomy, cfg.thresholds), s.labels) << s.id;
}

TEST(Synthetic, OpticDiscRuleFollowsBlurAndOcclusion) {
    Anatomy a;
    draw_clean_fundus(64, 1, &a);
    const LabelThresholds th;
    DegradationSpec spec;
    spec.blur_sigma = th.sigma_optic_disc + 0.01;
    EXPECT_FALSE(derive_labels(spec, a, th).optic_disc);
    spec.blur_sigma = th.sigma_optic_disc;
    EXPECT_TRUE(derive_labels(spec, a, th).optic_disc);
    spec.occlusion_boxes.push_back({static_cast<int>(a.disc_cx) - 2, static_cast<int>(a.disc_cy) - 2, 4, 4});
    EXPECT_FALSE(derive_labels(spec, a, th).optic_disc);
}

TEST(Degrade, IdentitySpecIsExact) {
    const Image img = draw_clean_fundus(64, 3);
    EXPECT_TRUE(degrade(img, DegradationSpec{}, 1) == img);
}

TEST(Degrade, BrightnessScale) {
    const Image img(16, 16, 0.8);
    DegradationSpec spec;
    spec.brightness_scale = 0.5;
    const Image out = degrade(img, spec, 0);
    for (double v : out.data()) EXPECT_NEAR(v, 0.4, 1e-15);
}

TEST(Degrade, NoiseStandardDeviation) {
    const Image img(100, 100, 0.5);
    DegradationSpec spec;
    spec.noise_std = 0.1;
    const Image out = degrade(img, spec, 42);
    double s = 0, ss = 0;
    const double n = static_cast<double>(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double d = out[i] - img[i];
        s += d;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / n - (s / n) * (s / n));
    EXPECT_GE(sd, 0.09);
    EXPECT_LE(sd, 0.11);
}

TEST(Degrade, OcclusionBlacksOutBox) {
    const Image img(20, 20, 0.7);
    DegradationSpec spec;
    spec.occlusion_boxes.push_back({2, 3, 4, 5});
    const Image out = degrade(img, spec, 0);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x) {
            const bool inside = x >= 2 && x < 6 && y >= 3 && y < 8;
            EXPECT_EQ(out.at(y, x, 1), inside ? 0.0 : 0.7);
        }
}

TEST(Degrade, RejectsInvalidSpecs) {
    const Image img(20, 20, 0.5);
    DegradationSpec spec;
    spec.occlusion_boxes.push_back({15, 15, 10, 2});
    EXPECT_THROW(degrade(img, spec, 0), ArgumentError);
    DegradationSpec neg;
    neg.blur_sigma = -1;
    EXPECT_THROW(degrade(img, neg, 0), ArgumentError);
    DegradationSpec bright;
    bright.brightness_scale = 1.5;
    EXPECT_THROW(degrade(img, bright, 0), ArgumentError);
}

TEST(Degrade, PsnrNonIncreasingWithSeverity) {
    const Image clean = draw_clean_fundus(64, 21);
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 20; ++i) {
        DegradationSpec spec;
        spec.blur_sigma = 0.25 * i;
        const double p = psnr(degrade(clean, spec, 5), clean);
        EXPECT_LE(p, prev + 1e-12) << "blur level " << i;
        prev = p;
    }
    prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 20; ++i) {
        DegradationSpec spec;
        spec.noise_std = 0.015 * i;
        const double p = psnr(degrade(clean, spec, 5), clean);
        EXPECT_LE(p, prev + 1e-12) << "noise level " << i;
        prev = p;
    }
}

TEST(Split, PaperRatiosOnHundred) {
    const auto s = split_sizes(100, {});
    EXPECT_EQ(s[0], 64);
    EXPECT_EQ(s[1], 16);
    EXPECT_EQ(s[2], 20);
}

TEST(Split, SingleSampleGoesToTrain) {
    const auto s = split_dataset(1, {}, 3);
    EXPECT_EQ(s.train.size(), 1u);
    EXPECT_TRUE(s.val.empty());
    EXPECT_TRUE(s.test.empty());
}

TEST(Split, DisjointAndCoveringAcrossSeeds) {
    Rng rng(17);
    for (int seed = 0; seed < 50; ++seed) {
        const int n = rng.uniform_int(1, 300);
        const SplitRatios r{};
        const auto s = split_dataset(n, r, static_cast<std::uint64_t>(seed));
        std::vector<int> all;
        all.insert(all.end(), s.train.begin(), s.train.end());
        all.insert(all.end(), s.val.begin(), s.val.end());
        all.insert(all.end(), s.test.begin(), s.test.end());
        std::sort(all.begin(), all.end());
        ASSERT_EQ(all.size(), static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) ASSERT_EQ(all[static_cast<std::size_t>(i)], i);
        EXPECT_LE(std::abs(static_cast<double>(s.train.size()) - r.train * n), 1.0);
        EXPECT_LE(std::abs(static_cast<double>(s.val.size()) - r.val * n), 1.0);
        EXPECT_LE(std::abs(static_cast<double>(s.test.size()) - r.test * n), 1.0);
        const auto again = split_dataset(n, r, static_cast<std::uint64_t>(seed));
        EXPECT_EQ(again.train, s.train);
        EXPECT_EQ(again.test, s.test);
    }
}

TEST(Split, RejectsBadRatios) {
    EXPECT_THROW(split_dataset(10, {0.5, 0.3, 0.3}, 0), ArgumentError);
    EXPECT_THROW(split_dataset(10, {0.0, 0.5, 0.5}, 0), ArgumentError);
}

namespace {

std::vector<ReadabilityLabels> with_positives(int n, int pos) {
    std::vector<ReadabilityLabels> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)].valid = i < pos;
    return out;
}

}  // namespace

TEST(ClassWeights, BalancedLabel) {
    const auto w = compute_class_weights(with_positives(40, 20));
    EXPECT_DOUBLE_EQ(w.weights[0].pos, 1.0);
    EXPECT_DOUBLE_EQ(w.weights[0].neg, 1.0);
    EXPECT_FALSE(w.degenerate[0]);
}

TEST(ClassWeights, TenPercentPositives) {
    const auto w = compute_class_weights(with_positives(100, 10));
    EXPECT_NEAR(w.weights[0].pos, 5.0, 5e-5);
    EXPECT_NEAR(w.weights[0].neg, 0.5556, 5e-5);
}

TEST(ClassWeights, DegenerateLabelFlagged) {
    const auto w = compute_class_weights(with_positives(30, 10));
    // macula/optic_disc/retina default to true for every sample.
    for (int k = 1; k < kNumLabels; ++k) {
        EXPECT_TRUE(w.degenerate[static_cast<std::size_t>(k)]);
        EXPECT_EQ(w.weights[static_cast<std::size_t>(k)].pos, 1.0);
        EXPECT_EQ(w.weights[static_cast<std::size_t>(k)].neg, 1.0);
    }
}

TEST(DatasetIo, PngRoundTripQuantises) {
    const auto dir = temp_dir("png");
    Image img(9, 7);
    Rng rng(4);
    for (auto& v : img.data()) v = rng.uniform();
    write_png(dir / "x.png", img);
    const Image back = read_png(dir / "x.png");
    ASSERT_EQ(back.height(), 9);
    ASSERT_EQ(back.width(), 7);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(back[i], std::round(img[i] * 255.0) / 255.0);
}

TEST(DatasetIo, CorpusRoundTrip) {
    const auto dir = temp_dir("corpus");
    const auto corpus = generate_synthetic_fundus(5, 6, 32);
    write_corpus(dir, corpus);
    const auto back = read_corpus(dir);
    ASSERT_EQ(back.size(), corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        EXPECT_EQ(back[i].id, corpus[i].id);
        EXPECT_EQ(back[i].labels, corpus[i].labels);
        EXPECT_EQ(back[i].degradation, corpus[i].degradation);
        EXPECT_NEAR(back[i].image[17], quantize_8bit(corpus[i].image[17]), 1e-15);
    }
}

TEST(DatasetIo, MalformedManifestReportsLine) {
    const auto dir = temp_dir("bad_manifest");
    {
        std::ofstream out(dir / "manifest.jsonl");
        out << "{not json}\n";
    }
    try {
        read_corpus(dir);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
    }
}
