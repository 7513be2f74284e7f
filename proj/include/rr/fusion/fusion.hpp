// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "rr/core/error.hpp"
#include "rr/core/rng.hpp"
#include "rr/nn/layers.hpp"

namespace rr {

enum class ResizeMode { learned_upsample, bilinear };
enum class Weighting { fixed, dynamic };

struct FusionStrategy {
    ResizeMode resize = ResizeMode::bilinear;
    Weighting weighting = Weighting::fixed;

    /// One of upsample_static, upsample_dynamic, bilinear_static, bilinear_dynamic.
    std::string key() const {
        return std::string(resize == ResizeMode::bilinear ? "bilinear" : "upsample") +
               (weighting == Weighting::fixed ? "_static" : "_dynamic");
    }

    static FusionStrategy from_key(const std::string& key) {
        for (const auto& s : all())
            if (s.key() == key) return s;
        throw ConfigError("unknown fusion strategy '" + key +
                          "' (expected upsample_static, upsample_dynamic, bilinear_static or bilinear_dynamic)");
    }

    static std::array<FusionStrategy, 4> all() {
        return {FusionStrategy{ResizeMode::learned_upsample, Weighting::fixed},
                FusionStrategy{ResizeMode::learned_upsample, Weighting::dynamic},
                FusionStrategy{ResizeMode::bilinear, Weighting::fixed},
                FusionStrategy{ResizeMode::bilinear, Weighting::dynamic}};
    }

    friend bool operator==(const FusionStrategy&, const FusionStrategy&) = default;
};

/// How the matched condition enters the denoiser: summed with the state, or
/// stacked as extra input channels.
enum class ConditionMode { add, concat };

/// Parameter-free bilinear resize of [N, C, h, w] to [N, C, ho, wo].
template <typename T>
nn::Var<T> match_resolution(const nn::Var<T>& c, int ho, int wo) {
    if (ho < 1 || wo < 1) throw ArgumentError("match_resolution: invalid target " + std::to_string(ho) + "x" + std::to_string(wo));
    require(c.value().ndim() == 4, "match_resolution expects [N, C, h, w], got ", nn::shape_str(c.shape()));
    if (c.dim(2) == ho && c.dim(3) == wo) return c;
    return nn::resize_bilinear(c, ho, wo);
}

/// w_c * c + w_x * x with c of batch 1 broadcast over x's batch.
template <typename T>
nn::Var<T> fuse(const nn::Var<T>& c, const nn::Var<T>& x, const nn::Var<T>& w_c, const nn::Var<T>& w_x) {
    nn::Var<T> cb = c;
    if (c.value().ndim() == 4 && x.value().ndim() == 4 && c.dim(0) == 1 && x.dim(0) != 1) {
        nn::Shape probe = c.shape();
        probe[0] = x.dim(0);
        if (probe == x.shape()) cb = nn::repeat_batch(c, x.dim(0));
    }
    if (cb.shape() != x.shape())
        throw ArgumentError("fuse: condition shape " + nn::shape_str(c.shape()) + " does not match state " +
                            nn::shape_str(x.shape()));
    return nn::add(nn::mul_scalar_var(cb, w_c), nn::mul_scalar_var(x, w_x));
}

template <typename T>
nn::Var<T> fuse(const nn::Var<T>& c, const nn::Var<T>& x, double w_c, double w_x) {
    return fuse(c, x, nn::Var<T>(nn::Tensor<T>({1}, std::vector<T>{static_cast<T>(w_c)})),
                nn::Var<T>(nn::Tensor<T>({1}, std::vector<T>{static_cast<T>(w_x)})));
}

/// (sigmoid(g), 1 - sigmoid(g)).
inline std::pair<double, double> dynamic_weights(double g) {
    const double s = 1.0 / (1.0 + std::exp(-g));
    return {s, 1.0 - s};
}

/// Channel projection, resolution matching and weighting of the condition.
/// The projection (1x1 conv to the image channel count) runs before resizing.
template <typename T>
class Fusion {
public:
    Fusion(nn::ParamStore<T>& ps, FusionStrategy strategy, int cond_channels, int cond_size, int target_size,
           int image_channels, Rng& rng, const std::string& prefix = "fusion/")
        : strategy_(strategy), target_(target_size) {
        require(cond_size >= 1 && target_size >= 1, "fusion: invalid sizes ", cond_size, " -> ", target_size);
        proj_ = nn::Conv2d<T>(ps, prefix + "proj", cond_channels, image_channels, 1, 1, 0, rng);
        if (strategy.resize == ResizeMode::learned_upsample) {
            if (target_size % cond_size != 0)
                throw FusionError("learned upsampling needs the target size " + std::to_string(target_size) +
                                  " to be a power-of-two multiple of the condition size " + std::to_string(cond_size));
            int ratio = target_size / cond_size;
            int stages = 0;
            while (ratio > 1 && ratio % 2 == 0) {
                ratio /= 2;
                ++stages;
            }
            if (ratio != 1)
                throw FusionError("learned upsampling ratio " + std::to_string(target_size / cond_size) +
                                  " is not a power of two");
            for (int i = 0; i < stages; ++i)
                up_.emplace_back(ps, prefix + "up" + std::to_string(i), image_channels, image_channels, 4, 2, 1, rng);
        }
        if (strategy.weighting == Weighting::dynamic) {
            gate_ = ps.create(prefix + "gate", {1}, nn::Init::zeros, rng);
        } else {
            one_ = nn::Var<T>(nn::Tensor<T>({1}, std::vector<T>{T(1)}));
        }
    }

    FusionStrategy strategy() const { return strategy_; }

    /// [1, C, h, w] condition -> [1, image_channels, target, target].
    nn::Var<T> match(const nn::Var<T>& c) const {
        nn::Var<T> h = proj_(c);
        if (strategy_.resize == ResizeMode::bilinear) return match_resolution(h, target_, target_);
        for (const auto& u : up_) h = u(h);
        return h;
    }

    nn::Var<T> weight_c() const { return strategy_.weighting == Weighting::dynamic ? nn::sigmoid(gate_) : one_; }
    nn::Var<T> weight_x() const {
        return strategy_.weighting == Weighting::dynamic ? nn::add_scalar(nn::scale(nn::sigmoid(gate_), T(-1)), T(1))
                                                          : one_;
    }

    /// Current (w_c, w_x).
    std::pair<double, double> weights() const {
        if (strategy_.weighting == Weighting::fixed) return {1.0, 1.0};
        return dynamic_weights(static_cast<double>(gate_.value()[0]));
    }

    nn::Var<T> operator()(const nn::Var<T>& c_matched, const nn::Var<T>& x) const {
        return fuse(c_matched, x, weight_c(), weight_x());
    }

private:
    FusionStrategy strategy_;
    int target_;
    nn::Conv2d<T> proj_;
    std::vector<nn::ConvTranspose2d<T>> up_;
    nn::Var<T> gate_, one_;
};

}  // namespace rr
