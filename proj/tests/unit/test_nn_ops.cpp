// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "rr/nn/layers.hpp"
#include "rr/nn/ops.hpp"

using rr::nn::Tensor;
using rr::nn::Var;
using rr::testing::max_grad_error;
using rr::testing::random_var;
namespace nn = rr::nn;

namespace {

// Scalar probe: sum(out * fixed random weights), so every output entry matters.
Var<double> probe(const Var<double>& out, unsigned seed = 99) {
    Var<double> w = random_var(out.shape(), seed);
    w.set_requires_grad(false);
    return nn::sum_all(nn::mul(out, w));
}

constexpr double kTol = 1e-6;

}  // namespace

TEST(NnOps, ElementwiseGradients) {
    auto a = random_var({2, 3, 4}, 1), b = random_var({2, 3, 4}, 2);
    EXPECT_LT(max_grad_error([&] { return probe(nn::add(a, b)); }, {a, b}), kTol);
    EXPECT_LT(max_grad_error([&] { return probe(nn::sub(a, b)); }, {a, b}), kTol);
    EXPECT_LT(max_grad_error([&] { return probe(nn::mul(a, b)); }, {a, b}), kTol);
    EXPECT_LT(max_grad_error([&] { return probe(nn::sigmoid(a)); }, {a}), kTol);
    EXPECT_LT(max_grad_error([&] { return probe(nn::silu(a)); }, {a}), kTol);
    EXPECT_LT(max_grad_error([&] { return probe(nn::exp(a)); }, {a}), kTol);
    EXPECT_LT(max_grad_error([&] { return probe(nn::scale(a, 0.3)); }, {a}), kTol);
    auto g = random_var({1}, 3);
    EXPECT_LT(max_grad_error([&] { return probe(nn::mul_scalar_var(a, g)); }, {a, g}), kTol);
}

TEST(NnOps, BroadcastAndShapeGradients) {
    auto x = random_var({2, 3, 2, 2}, 4), v = random_var({2, 3}, 5);
    EXPECT_LT(max_grad_error([&] { return probe(nn::add_nc(x, v)); }, {x, v}), kTol);
    auto gm = random_var({3}, 6), bt = random_var({3}, 7);
    EXPECT_LT(max_grad_error([&] { return probe(nn::channel_affine(x, gm, bt)); }, {x, gm, bt}), kTol);
    auto one = random_var({1, 3, 2, 2}, 8);
    EXPECT_LT(max_grad_error([&] { return probe(nn::repeat_batch(one, 3)); }, {one}), kTol);
    auto y = random_var({2, 2, 2, 2}, 9);
    EXPECT_LT(max_grad_error([&] { return probe(nn::concat<double>({x, y}, 1)); }, {x, y}), kTol);
    EXPECT_LT(max_grad_error([&] { return probe(nn::slice(x, 1, 1, 2)); }, {x}), kTol);
    auto m = random_var({3, 5}, 10);
    EXPECT_LT(max_grad_error([&] { return probe(nn::transpose2d(m)); }, {m}), kTol);
    EXPECT_LT(max_grad_error([&] { return probe(nn::reshape(m, {5, 3})); }, {m}), kTol);
}

TEST(NnOps, DenseAlgebraGradients) {
    auto a = random_var({3, 4}, 11), b = random_var({4, 2}, 12);
    EXPECT_LT(max_grad_error([&] { return probe(nn::matmul(a, b)); }, {a, b}), kTol);
    auto w = random_var({5, 4}, 13), bias = random_var({5}, 14);
    EXPECT_LT(max_grad_error([&] { return probe(nn::linear(a, w, bias)); }, {a, w, bias}), kTol);
    EXPECT_LT(max_grad_error([&] { return probe(nn::softmax_rows(a)); }, {a}), kTol);
}

TEST(NnOps, ConvolutionGradients) {
    auto x = random_var({2, 4, 6, 5}, 15);
    auto w = random_var({6, 4, 3, 3}, 16), b = random_var({6}, 17);
    EXPECT_LT(max_grad_error([&] { return probe(nn::conv2d(x, w, b, 2, 1)); }, {x, w, b}), kTol);
    auto wg = random_var({6, 2, 3, 3}, 18);
    EXPECT_LT(max_grad_error([&] { return probe(nn::conv2d(x, wg, b, 1, 1, 2)); }, {x, wg, b}), kTol);
    auto w1 = random_var({3, 4, 1, 1}, 19);
    EXPECT_LT(max_grad_error([&] { return probe(nn::conv2d(x, w1, Var<double>{})); }, {x, w1}), kTol);
    auto wt = random_var({4, 3, 4, 4}, 20), bt = random_var({3}, 21);
    EXPECT_LT(max_grad_error([&] { return probe(nn::conv_transpose2d(x, wt, bt, 2, 1)); }, {x, wt, bt}), kTol);
    auto wt3 = random_var({4, 2, 3, 3}, 22), bt2 = random_var({2}, 23);
    EXPECT_LT(max_grad_error([&] { return probe(nn::conv_transpose2d(x, wt3, bt2, 2, 1, 1)); }, {x, wt3, bt2}), kTol);
}

TEST(NnOps, PoolingAndResampleGradients) {
    auto x = random_var({2, 3, 6, 6}, 24);
    EXPECT_LT(max_grad_error([&] { return probe(nn::max_pool2d(x, 3, 2, 1)); }, {x}), kTol);
    EXPECT_LT(max_grad_error([&] { return probe(nn::avg_pool2d(x, 2)); }, {x}), kTol);
    EXPECT_LT(max_grad_error([&] { return probe(nn::global_avg_pool(x)); }, {x}), kTol);
    EXPECT_LT(max_grad_error([&] { return probe(nn::upsample_nearest(x, 2)); }, {x}), kTol);
    EXPECT_LT(max_grad_error([&] { return probe(nn::resize_bilinear(x, 9, 4)); }, {x}), kTol);
    EXPECT_LT(max_grad_error([&] { return probe(nn::group_norm(x, 3)); }, {x}), 1e-5);
    EXPECT_LT(max_grad_error([&] { return probe(nn::group_norm(x, 1)); }, {x}), 1e-5);
}

TEST(NnOps, LossGradients) {
    auto p = random_var({2, 5}, 25, 0.05, 0.95), t = random_var({2, 5}, 26, 0.0, 1.0);
    EXPECT_LT(max_grad_error([&] { return nn::mse_loss(p, t); }, {p, t}), kTol);
    EXPECT_LT(max_grad_error([&] { return nn::bce_loss(p, t); }, {p, t}), kTol);
    EXPECT_LT(max_grad_error([&] { return nn::bce_loss(p, t, true); }, {p, t}), kTol);
    auto mu = random_var({2, 3}, 27), lv = random_var({2, 3}, 28);
    EXPECT_LT(max_grad_error([&] { return nn::kl_loss(mu, lv); }, {mu, lv}), kTol);
}

TEST(NnOps, ConvMatchesDirectLoops) {
    auto x = random_var({1, 2, 5, 5}, 29), w = random_var({3, 2, 3, 3}, 30), b = random_var({3}, 31);
    auto y = nn::conv2d(x, w, b, 2, 1).value();
    ASSERT_EQ(y.shape(), (nn::Shape{1, 3, 3, 3}));
    for (int o = 0; o < 3; ++o)
        for (int oy = 0; oy < 3; ++oy)
            for (int ox = 0; ox < 3; ++ox) {
                double acc = b.value()[o];
                for (int c = 0; c < 2; ++c)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
                            if (iy < 0 || iy >= 5 || ix < 0 || ix >= 5) continue;
                            acc += w.value().at(o, c, ky, kx) * x.value().at(0, c, iy, ix);
                        }
                EXPECT_NEAR(y.at(0, o, oy, ox), acc, 1e-12);
            }
}

TEST(NnOps, TransposedConvIsAdjointOfConv) {
    // <conv(x), y> == <x, conv_transpose(y)> with shared weights and no bias.
    auto x = random_var({1, 3, 8, 8}, 32), w = random_var({4, 3, 4, 4}, 33);
    auto cx = nn::conv2d(x, w, Var<double>{}, 2, 1);
    auto y = random_var(cx.shape(), 34);
    auto ty = nn::conv_transpose2d(y, w, Var<double>{}, 2, 1);
    ASSERT_EQ(ty.shape(), x.shape());
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < cx.size(); ++i) lhs += cx.value()[i] * y.value()[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x.value()[i] * ty.value()[i];
    EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(NnOps, NoGradGuardSkipsRecording) {
    auto a = random_var({3}, 35);
    Var<double> out;
    {
        nn::NoGradGuard guard;
        out = nn::sigmoid(a);
    }
    EXPECT_FALSE(out.requires_grad());
    EXPECT_TRUE(nn::sigmoid(a).requires_grad());
}

TEST(NnOps, LossesRejectNaN) {
    Var<double> p(Tensor<double>({2}, {0.5, std::nan("")}));
    Var<double> t(Tensor<double>({2}, {0.0, 1.0}));
    EXPECT_THROW(nn::mse_loss(p, t), rr::NumericError);
    EXPECT_THROW(nn::bce_loss(p, t), rr::NumericError);
}
