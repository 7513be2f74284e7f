// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "rr/condfeat/extractor.hpp"

using namespace rr;
using nn::Tensor;
using nn::Var;

namespace {

ExtractorConfig small_config(ExtractorKind kind) {
    ExtractorConfig c;
    c.kind = kind;
    c.input_size = 32;
    c.width = 8;
    c.attention = {32, 8};
    return c;
}

Tensor<float> random_image_tensor(int size, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<float> t({3, size, size});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform());
    return t;
}

Var<float> batch_of(const Tensor<float>& img) {
    return Var<float>(img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)}));
}

}  // namespace

TEST(Extractor, EveryLayoutHasDocumentedShape) {
    for (ExtractorKind k : kAllExtractors) {
        for (int tap = 1; tap <= 3; ++tap) {
            ExtractorConfig cfg = small_config(k);
            cfg.tap_stage = tap;
            cfg.attention = {8, 8};
            nn::ParamStore<float> ps;
            Rng rng(1);
            FeatureExtractor<float> fx(ps, cfg, rng);
            Rng noise(2);
            Tensor<float> x({2, 3, 32, 32});
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(noise.uniform());
            const auto f = fx.backbone(Var<float>(x));
            EXPECT_EQ(f.shape(), (nn::Shape{2, cfg.out_channels(), 32 >> tap, 32 >> tap})) << to_string(k) << " " << tap;
            EXPECT_EQ(fx(Var<float>(x)).shape(), (nn::Shape{2, 8, 32 >> tap, 32 >> tap}));
        }
        EXPECT_EQ(extractor_from_string(to_string(k)), k);
    }
}

TEST(Extractor, DeterministicAndRejectsWrongShape) {
    nn::ParamStore<float> ps;
    Rng rng(1);
    FeatureExtractor<float> fx(ps, small_config(ExtractorKind::res34), rng);
    const auto img = random_image_tensor(32, 3);
    const auto a = fx(batch_of(img)).value(), b = fx(batch_of(img)).value();
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
    EXPECT_THROW(fx(batch_of(random_image_tensor(16, 3))), ArgumentError);
}

TEST(Extractor, ZeroWeightPatchConvGivesRectifiedBias) {
    ExtractorConfig cfg = small_config(ExtractorKind::self_attention_only);
    cfg.width = 32;
    cfg.tap_stage = 1;
    nn::ParamStore<double> ps;
    Rng rng(1);
    FeatureExtractor<double> fx(ps, cfg, rng);
    ps.get("extractor/patch/weight").mutable_value().fill(0.0);
    auto bias = ps.get("extractor/patch/bias");
    for (std::size_t i = 0; i < bias.size(); ++i) bias.mutable_value()[i] = 0.1 * (static_cast<double>(i) - 10.0);
    const auto f = fx.backbone(Var<double>(Tensor<double>({1, 3, 32, 32}))).value();
    for (int c = 0; c < 32; ++c)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) EXPECT_EQ(f.at(0, c, y, x), std::max(0.0, bias.value()[static_cast<std::size_t>(c)]));
}

TEST(Compress, DefaultWidthAndNonNegative) {
    ExtractorConfig cfg = small_config(ExtractorKind::res18);
    cfg.width = 64;
    cfg.attention = {};
    nn::ParamStore<float> ps;
    Rng rng(1);
    FeatureExtractor<float> fx(ps, cfg, rng);
    const auto c = fx.compressor()(fx.backbone(batch_of(random_image_tensor(32, 4)))).value();
    EXPECT_EQ(c.dim(1), 256);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_GE(c[i], 0.0f);
}

TEST(Compress, TooFewChannelsThrows) {
    nn::ParamStore<float> ps;
    Rng rng(1);
    EXPECT_THROW(ChannelCompressor<float>(ps, "c", 16, 32, rng), ArgumentError);
}

TEST(Compress, IdentityKernelIsNormalisationOnly) {
    nn::ParamStore<double> ps;
    Rng rng(1);
    ChannelCompressor<double> comp(ps, "c", 4, 4, rng);
    auto& w = comp.conv().weight.mutable_value();
    w.fill(0.0);
    for (int i = 0; i < 4; ++i) w[static_cast<std::size_t>(i * 4 + i)] = 1.0;
    comp.conv().bias.mutable_value().fill(0.0);
    const auto x = rr::testing::random_var({2, 4, 3, 5}, 7);
    const auto y = comp(x).value();
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 4; ++c) {
            double mean = 0, var = 0;
            for (int i = 0; i < 15; ++i) mean += x.value()[(n * 4 + c) * 15 + i];
            mean /= 15;
            for (int i = 0; i < 15; ++i) {
                const double d = x.value()[(n * 4 + c) * 15 + i] - mean;
                var += d * d;
            }
            var /= 15;
            for (int i = 0; i < 15; ++i) {
                const std::size_t k = static_cast<std::size_t>((n * 4 + c) * 15 + i);
                EXPECT_NEAR(y[k], std::max(0.0, (x.value()[k] - mean) / std::sqrt(var + 1e-5)), 1e-12);
            }
        }
}

TEST(Attention, ConfigValidation) {
    EXPECT_THROW((AttentionConfig{250, 8}.validate()), ConfigError);
    EXPECT_NO_THROW((AttentionConfig{256, 8}.validate()));
}

TEST(Attention, RowsSumToOne) {
    nn::ParamStore<float> ps;
    Rng rng(2);
    SelfAttention<float> att(ps, "a", {32, 8}, rng);
    for (unsigned seed = 0; seed < 5; ++seed) {
        std::vector<Tensor<float>> w;
        Rng r(seed);
        Tensor<float> f({1, 32, 3, 4});
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(r.normal() * 3);
        const auto out = att(Var<float>(f), &w);
        EXPECT_EQ(out.shape(), f.shape());
        ASSERT_EQ(w.size(), 8u);
        for (const auto& a : w) {
            ASSERT_EQ(a.shape(), (nn::Shape{12, 12}));
            for (int row = 0; row < 12; ++row) {
                double s = 0;
                for (int col = 0; col < 12; ++col) s += a[static_cast<std::size_t>(row * 12 + col)];
                EXPECT_NEAR(s, 1.0, 1e-6);
            }
        }
    }
}

TEST(Attention, IdenticalTokensGiveUniformWeights) {
    nn::ParamStore<double> ps;
    Rng rng(3);
    SelfAttention<double> att(ps, "a", {16, 4}, rng);
    Tensor<double> f({1, 16, 2, 3});
    for (int c = 0; c < 16; ++c)
        for (int i = 0; i < 6; ++i) f[static_cast<std::size_t>(c * 6 + i)] = 0.1 * c - 0.5;
    std::vector<Tensor<double>> w;
    att(Var<double>(f), &w);
    for (const auto& a : w)
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], 1.0 / 6.0, 1e-12);
}

TEST(Attention, TwoTokenSingleHeadClosedForm) {
    nn::ParamStore<double> ps;
    Rng rng(4);
    SelfAttention<double> att(ps, "a", {2, 1}, rng);
    const std::vector<double> wq{0.5, -1.0, 2.0, 0.3}, wk{1.5, 0.2, -0.7, 1.1}, wv{0.9, 0.4, -0.2, 1.3},
        wo{1.0, 0.5, -0.5, 2.0}, bq{0.1, -0.2}, bk{0.05, 0.3}, bv{-0.4, 0.2}, bo{0.01, -0.02};
    auto set = [](nn::Linear<double>& l, const std::vector<double>& w, const std::vector<double>& b) {
        std::copy(w.begin(), w.end(), l.weight.mutable_value().data());
        std::copy(b.begin(), b.end(), l.bias.mutable_value().data());
    };
    set(att.q(), wq, bq);
    set(att.k(), wk, bk);
    set(att.v(), wv, bv);
    set(att.out(), wo, bo);
    const double x[2][2] = {{0.7, -1.2}, {0.4, 0.9}};
    auto lin = [](const std::vector<double>& w, const std::vector<double>& b, const double* v, int r) {
        return w[static_cast<std::size_t>(r * 2)] * v[0] + w[static_cast<std::size_t>(r * 2 + 1)] * v[1] + b[static_cast<std::size_t>(r)];
    };
    double q[2][2], k[2][2], v[2][2];
    for (int t = 0; t < 2; ++t)
        for (int r = 0; r < 2; ++r) {
            q[t][r] = lin(wq, bq, x[t], r);
            k[t][r] = lin(wk, bk, x[t], r);
            v[t][r] = lin(wv, bv, x[t], r);
        }
    Tensor<double> tok({2, 2});
    for (int t = 0; t < 2; ++t)
        for (int r = 0; r < 2; ++r) tok[static_cast<std::size_t>(t * 2 + r)] = x[t][r];
    const auto out = att.tokens(Var<double>(tok)).value();
    for (int i = 0; i < 2; ++i) {
        const double s0 = (q[i][0] * k[0][0] + q[i][1] * k[0][1]) / std::sqrt(2.0);
        const double s1 = (q[i][0] * k[1][0] + q[i][1] * k[1][1]) / std::sqrt(2.0);
        const double a0 = 1.0 / (1.0 + std::exp(s1 - s0)), a1 = 1.0 - a0;
        const double h[2] = {a0 * v[0][0] + a1 * v[1][0], a0 * v[0][1] + a1 * v[1][1]};
        for (int r = 0; r < 2; ++r) EXPECT_NEAR(out[static_cast<std::size_t>(i * 2 + r)], x[i][r] + lin(wo, bo, h, r), 1e-9);
    }
}

TEST(Attention, InvariantToHeadStorageOrder) {
    const int d = 12, heads = 3, dh = 4;
    nn::ParamStore<double> a_ps, b_ps;
    Rng rng(5), rng2(6);
    SelfAttention<double> a(a_ps, "a", {d, heads}, rng), b(b_ps, "b", {d, heads}, rng2);
    const std::vector<int> perm{2, 0, 1};  // head h of b is head perm[h] of a
    for (auto [src, dst] : {std::pair{&a.q(), &b.q()}, std::pair{&a.k(), &b.k()}, std::pair{&a.v(), &b.v()}}) {
        for (int h = 0; h < heads; ++h)
            for (int r = 0; r < dh; ++r) {
                const int from = perm[static_cast<std::size_t>(h)] * dh + r, to = h * dh + r;
                for (int c = 0; c < d; ++c)
                    dst->weight.mutable_value()[static_cast<std::size_t>(to * d + c)] = src->weight.value()[static_cast<std::size_t>(from * d + c)];
                dst->bias.mutable_value()[static_cast<std::size_t>(to)] = src->bias.value()[static_cast<std::size_t>(from)];
            }
    }
    for (int row = 0; row < d; ++row)
        for (int h = 0; h < heads; ++h)
            for (int r = 0; r < dh; ++r)
                b.out().weight.mutable_value()[static_cast<std::size_t>(row * d + h * dh + r)] =
                    a.out().weight.value()[static_cast<std::size_t>(row * d + perm[static_cast<std::size_t>(h)] * dh + r)];
    b.out().bias.mutable_value() = a.out().bias.value();
    const auto f = rr::testing::random_var({2, d, 3, 3}, 8);
    const auto ya = a(f).value(), yb = b(f).value();
    for (std::size_t i = 0; i < ya.size(); ++i) EXPECT_NEAR(ya[i], yb[i], 1e-12);
}

TEST(Attention, GradientsMatchFiniteDifferences) {
    nn::ParamStore<double> ps;
    Rng rng(7);
    SelfAttention<double> att(ps, "a", {8, 2}, rng);
    const auto f = rr::testing::random_var({1, 8, 2, 2}, 9);
    std::vector<Var<double>> params{f};
    for (const auto& [_, v] : ps.entries()) params.push_back(v);
    const auto loss = [&] {
        const auto y = att(f);
        return nn::mean_all(nn::mul(y, y));
    };
    EXPECT_LT(rr::testing::max_grad_error(loss, params), 1e-6);
}

TEST(StaticCondition, SingleAndPairMeans) {
    Tensor<float> a({2, 2, 2}), b({2, 2, 2});
    for (std::size_t i = 0; i < 8; ++i) {
        a[i] = static_cast<float>(i) * 0.5f;
        b[i] = 1.0f - static_cast<float>(i);
    }
    const auto one = pool_condition({a});
    EXPECT_EQ(one.n_sources, 1);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(one.map[i], a[i]);
    const auto two = pool_condition({a, b});
    EXPECT_EQ(two.n_sources, 2);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(two.map[i], (a[i] + b[i]) / 2);
    EXPECT_THROW(pool_condition({}), ArgumentError);
}

TEST(StaticCondition, PermutationInvariantAndRecomputable) {
    nn::ParamStore<float> ps;
    Rng rng(1);
    FeatureExtractor<float> fx(ps, small_config(ExtractorKind::mobilenet_like), rng);
    std::vector<Tensor<float>> imgs;
    for (int i = 0; i < 10; ++i) imgs.push_back(random_image_tensor(32, 100 + static_cast<std::uint64_t>(i)));
    const auto ref = build_static_condition(fx, imgs, 3);
    EXPECT_EQ(ref.n_sources, 10);
    std::vector<int> order(10);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(3);
    for (int trial = 0; trial < 5; ++trial) {
        std::shuffle(order.begin(), order.end(), shuffle.engine());
        std::vector<Tensor<float>> permuted;
        for (int i : order) permuted.push_back(imgs[static_cast<std::size_t>(i)]);
        const auto c = build_static_condition(fx, permuted, 4);
        for (std::size_t i = 0; i < c.map.size(); ++i) ASSERT_EQ(c.map[i], ref.map[i]);
    }
    // Recompute the mean of stored per-image source maps in input order.
    std::vector<Tensor<float>> maps;
    for (const auto& img : imgs) {
        const auto m = fx(batch_of(img)).value();
        maps.push_back(m.reshaped({m.dim(1), m.dim(2), m.dim(3)}));
    }
    const auto pooled = pool_condition(maps);
    for (std::size_t i = 0; i < pooled.map.size(); ++i) {
        double mean = 0;
        for (const auto& m : maps) mean += m[i];
        EXPECT_NEAR(pooled.map[i], mean / 10.0, 1e-7);
    }
    EXPECT_THROW(build_static_condition(fx, std::vector<Tensor<float>>{}), ArgumentError);
}
