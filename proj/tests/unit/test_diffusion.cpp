// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "rr/diffusion/denoiser.hpp"
#include "rr/diffusion/schedule.hpp"

using namespace rr;
using nn::Tensor;

namespace {

Tensor<double> random_tensor(nn::Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    return gaussian_tensor<double>(shape, rng);
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST(Schedule, SingleStep) {
    const auto s = make_schedule(1, 0.5, 0.5);
    ASSERT_EQ(s.T, 1);
    EXPECT_EQ(s.alpha_at(1), 0.5);
    EXPECT_EQ(s.alpha_bar_at(0), 1.0);
    EXPECT_EQ(s.alpha_bar_at(1), 0.5);
}

TEST(Schedule, DefaultsMatchDirectProduct) {
    const auto s = make_schedule(1000, 1e-4, 0.02);
    long double prod = 1.0L;
    for (int t = 1; t <= 1000; ++t) {
        const long double beta = 1e-4L + (0.02L - 1e-4L) * (t - 1) / 999.0L;
        prod *= 1.0L - beta;
        EXPECT_NEAR(s.beta_at(t), static_cast<double>(beta), 1e-15);
        EXPECT_NEAR(s.alpha_bar_at(t), static_cast<double>(prod), 1e-12);
        EXPECT_LT(s.alpha_bar_at(t), s.alpha_bar_at(t - 1));
        EXPECT_NEAR(s.alpha_bar_at(t - 1) * s.alpha_at(t), s.alpha_bar_at(t), 1e-12);
    }
    EXPECT_GT(s.alpha_bar_at(1000), 0.0);
    EXPECT_LT(s.alpha_bar_at(1000), 0.01);
}

TEST(Schedule, InvalidArgumentsThrow) {
    EXPECT_THROW(make_schedule(0), ArgumentError);
    EXPECT_THROW(make_schedule(10, 0.0, 0.02), ArgumentError);
    EXPECT_THROW(make_schedule(10, 0.03, 0.02), ArgumentError);
    EXPECT_THROW(make_schedule(10, 1e-4, 1.0), ArgumentError);
}

TEST(QSample, TimeZeroIsExact) {
    const auto s = make_schedule(50);
    const auto x0 = random_tensor({2, 3, 4, 4}, 1), eps = random_tensor({2, 3, 4, 4}, 2);
    const auto xt = q_sample(x0, 0, eps, s);
    for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_EQ(xt[i], x0[i]);
}

TEST(QSample, QuarterVariance) {
    const auto s = schedule_from_betas({0.25});
    const auto xt = q_sample(Tensor<double>({4}), 1, Tensor<double>({4}, 1.0), s);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(xt[i], 0.5);
}

TEST(QSample, OutOfRangeThrows) {
    const auto s = make_schedule(10);
    EXPECT_THROW(q_sample(Tensor<double>({2}), 11, Tensor<double>({2}), s), ArgumentError);
    EXPECT_THROW(q_sample(Tensor<double>({2}), -1, Tensor<double>({2}), s), ArgumentError);
    EXPECT_THROW(q_sample(Tensor<double>({2}), 1, Tensor<double>({3}), s), ArgumentError);
}

TEST(QSample, MonteCarloMoments) {
    const auto s = make_schedule(50);
    const int t = 25, n = 10000;
    const double x0 = 0.3;
    Rng rng(11);
    double sum = 0, sq = 0;
    std::vector<double> draws;
    for (int i = 0; i < n; ++i) {
        const double v = q_sample(Tensor<double>({1}, x0), t, Tensor<double>({1}, rng.normal()), s)[0];
        draws.push_back(v);
        sum += v;
    }
    const double mean = sum / n;
    for (double v : draws) sq += (v - mean) * (v - mean);
    const double var = sq / (n - 1);
    const double true_mean = std::sqrt(s.alpha_bar_at(t)) * x0, true_var = 1.0 - s.alpha_bar_at(t);
    EXPECT_LT(std::abs(mean - true_mean), 3.0 * std::sqrt(true_var / n));
    EXPECT_LT(std::abs(var - true_var), 3.0 * true_var * std::sqrt(2.0 / (n - 1)));
}

TEST(QSample, LinearInInputs) {
    const auto s = make_schedule(50);
    const auto x0 = random_tensor({3, 5}, 3), eps = random_tensor({3, 5}, 4);
    Tensor<double> ax0 = x0, aeps = eps;
    for (std::size_t i = 0; i < x0.size(); ++i) {
        ax0[i] *= -2.5;
        aeps[i] *= -2.5;
    }
    const auto lhs = q_sample(ax0, 17, aeps, s), rhs = q_sample(x0, 17, eps, s);
    for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], -2.5 * rhs[i], 1e-12);
}

TEST(QSample, ExpectedSquaredNormFromZero) {
    const auto s = make_schedule(50);
    const int t = 40, draws = 2000;
    const nn::Shape shape{3, 4, 4};
    Rng rng(5);
    double acc = 0;
    for (int i = 0; i < draws; ++i) {
        const auto xt = q_sample(Tensor<double>(shape), t, gaussian_tensor<double>(shape, rng), s);
        for (std::size_t j = 0; j < xt.size(); ++j) acc += xt[j] * xt[j];
    }
    const double numel = 48, expected = (1.0 - s.alpha_bar_at(t)) * numel;
    // ||x_t||^2 / (1 - alpha_bar) is chi-squared with 48 degrees of freedom.
    const double se = (1.0 - s.alpha_bar_at(t)) * std::sqrt(2.0 * numel / draws);
    EXPECT_LT(std::abs(acc / draws - expected), 3.0 * se);
}

TEST(ReverseStep, OneStepIdentity) {
    const auto s = make_schedule(50);
    const auto x0 = random_tensor({2, 3, 4, 4}, 6), eps = random_tensor({2, 3, 4, 4}, 7);
    const auto x1 = q_sample(x0, 1, eps, s);
    const auto back = reverse_step(x1, 1, eps, s, Tensor<double>(), false);
    EXPECT_LT(max_abs_diff(back, x0), 1e-10);
}

TEST(ReverseStep, ScalarSpotValues) {
    EXPECT_NEAR(reverse_step_scalar(1.0, 0.99, 0.9, 0.01, 0.5, 0.0, false), 0.989147, 1e-6);
    EXPECT_EQ(reverse_step_scalar(0.7, 1.0, 0.5, 1e-4, 0.0, 0.0, false), 0.7);
    EXPECT_EQ(reverse_step_scalar(0.7, 1.0, 0.5, 0.04, 0.0, 0.0, true), 0.7);
    EXPECT_NEAR(reverse_step_scalar(0.7, 1.0, 0.5, 0.04, 0.0, 1.0, true), 0.9, 1e-15);
}

TEST(ReverseStep, NoiseTermOnlyWhenEnabled) {
    const auto s = make_schedule(50);
    const auto x = random_tensor({8}, 8), et = random_tensor({8}, 9), eps = random_tensor({8}, 10);
    const auto off = reverse_step(x, 20, et, s, eps, false), on = reverse_step(x, 20, et, s, eps, true);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(on[i] - off[i], std::sqrt(s.beta_at(20)) * eps[i], 1e-12);
}

TEST(ReverseStep, TimeZeroThrows) {
    const auto s = make_schedule(10);
    EXPECT_THROW(reverse_step(Tensor<double>({2}), 0, Tensor<double>({2}), s, Tensor<double>(), false), ArgumentError);
}

TEST(NoiseMse, Values) {
    const nn::Var<double> a(Tensor<double>({4}, 0.25)), b(Tensor<double>({4}, 0.75));
    EXPECT_EQ(noise_mse_loss(a, a).item(), 0.0);
    EXPECT_DOUBLE_EQ(noise_mse_loss(a, b).item(), 0.25);
    const auto p = random_tensor({3, 7}, 12), q = random_tensor({3, 7}, 13);
    double oracle = 0;
    for (std::size_t i = 0; i < p.size(); ++i) oracle += (p[i] - q[i]) * (p[i] - q[i]);
    oracle /= static_cast<double>(p.size());
    EXPECT_NEAR(noise_mse_loss(nn::Var<double>(p), nn::Var<double>(q)).item(), oracle, 1e-12);
    Tensor<double> bad = p;
    bad[3] = std::nan("");
    EXPECT_THROW(noise_mse_loss(nn::Var<double>(bad), nn::Var<double>(q)), NumericError);
}

// The oracle returns the noise that, combined with the known clean image,
// exactly explains the current state. With the fresh-noise term off each
// step is then the posterior mean given the true x0, and the t=1 step returns
// x0 itself.
TEST(SampleRestore, OracleRoundTripFiftySteps) {
    const auto s = make_schedule(50);
    const auto x0 = random_tensor({1, 3, 8, 8}, 14);
    const auto xT = q_sample(x0, 50, random_tensor({1, 3, 8, 8}, 15), s);
    const NoisePredictor<double> oracle = [&](const Tensor<double>& x, int t) {
        Tensor<double> e(x.shape());
        const double a = std::sqrt(s.alpha_bar_at(t)), b = std::sqrt(1.0 - s.alpha_bar_at(t));
        for (std::size_t i = 0; i < x.size(); ++i) e[i] = (x[i] - a * x0[i]) / b;
        return e;
    };
    Rng rng(0);
    const auto out = sample_restore(xT, 50, oracle, s, rng, false);
    EXPECT_LT(max_abs_diff(out, x0), 1e-3);
}

TEST(SampleRestore, SingleStepChainIsOneReverseStep) {
    const auto s = make_schedule(1, 0.3, 0.3);
    const auto x = random_tensor({5}, 16), et = random_tensor({5}, 17);
    Rng rng(1);
    const auto chain = sample_restore<double>(x, 1, [&](const Tensor<double>&, int) { return et; }, s, rng);
    const auto step = reverse_step(x, 1, et, s, Tensor<double>(), false);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(chain[i], step[i]);
}

namespace {

DenoiserConfig tiny_denoiser(Backbone b) {
    DenoiserConfig c;
    c.backbone = b;
    c.image_size = 16;
    c.width = 8;
    c.time_dim = 16;
    c.vae_channels = {4, 8, 8};
    c.latent_dim = 8;
    return c;
}

}  // namespace

TEST(Denoiser, OutputShapeMatchesInputForEveryBackbone) {
    for (Backbone b : kAllBackbones) {
        nn::ParamStore<float> ps;
        Rng rng(3);
        Denoiser<float> net(ps, tiny_denoiser(b), rng);
        Rng noise(4);
        const nn::Var<float> x(gaussian_tensor<float>({2, 3, 16, 16}, noise));
        const auto out = net.forward(x, {1, 7}, &noise);
        EXPECT_EQ(out.out.shape(), x.shape()) << to_string(b);
        EXPECT_EQ(out.mu.defined(), b == Backbone::vae);
        EXPECT_EQ(backbone_from_string(to_string(b)), b);
    }
    EXPECT_THROW(backbone_from_string("transformer"), ConfigError);
}

TEST(Denoiser, TimestepChangesOutput) {
    for (Backbone b : kAllBackbones) {
        nn::ParamStore<float> ps;
        Rng rng(3);
        Denoiser<float> net(ps, tiny_denoiser(b), rng);
        // The unet heads start at zero; perturb them so the output depends on the input.
        for (auto& [name, v] : ps.entries())
            if (name.find("head") != std::string::npos)
                for (std::size_t i = 0; i < v.size(); ++i) ps.get(name).mutable_value()[i] = 0.1f * static_cast<float>(i % 5);
        Rng noise(4);
        const nn::Var<float> x(gaussian_tensor<float>({1, 3, 16, 16}, noise));
        const auto a = net.forward(x, {1}).out.value(), c = net.forward(x, {40}).out.value();
        double diff = 0;
        for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - c[i]);
        EXPECT_GT(diff, 1e-4) << to_string(b);
    }
}

TEST(Denoiser, GradientsMatchFiniteDifferences) {
    for (Backbone b : kAllBackbones) {
        DenoiserConfig cfg = tiny_denoiser(b);
        cfg.image_size = 8;
        cfg.width = 4;
        cfg.time_dim = 4;
        cfg.vae_channels = {2, 2, 2};
        cfg.latent_dim = 2;
        nn::ParamStore<double> ps;
        Rng rng(9);
        Denoiser<double> net(ps, cfg, rng);
        for (auto& [name, v] : ps.entries())
            if (name.find("head") != std::string::npos)
                for (std::size_t i = 0; i < v.size(); ++i) ps.get(name).mutable_value()[i] = 0.05 * (static_cast<double>(i % 7) - 3);
        const nn::Var<double> x = rr::testing::random_var({2, 3, 8, 8}, 3);
        const nn::Var<double> target(random_tensor({2, 3, 8, 8}, 4));
        std::vector<nn::Var<double>> params;
        for (const auto& [_, v] : ps.entries()) params.push_back(v);
        const auto f = [&] { return nn::mse_loss(net.forward(x, {2, 9}).out, target); };
        EXPECT_LT(rr::testing::max_tensor_grad_error(f, params, 1e-5), 1e-4) << to_string(b);
    }
}
