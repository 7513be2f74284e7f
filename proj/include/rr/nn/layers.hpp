// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rr/core/rng.hpp"
#include "rr/nn/ops.hpp"

namespace rr::nn {

enum class Init { uniform_fan_in, zeros, ones };

/// Named, ordered collection of trainable arrays. Names are the array names
/// used in checkpoints.
template <typename T>
class ParamStore {
public:
    Var<T> create(const std::string& name, Shape shape, Init init, Rng& rng, int fan_in = 1) {
        require(!index_.count(name), "duplicate parameter name '", name, "'");
        Tensor<T> t(std::move(shape));
        if (init == Init::ones) {
            t.fill(T(1));
        } else if (init == Init::uniform_fan_in) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(-bound, bound));
        }
        Var<T> v(std::move(t), true);
        index_[name] = entries_.size();
        entries_.emplace_back(name, v);
        return v;
    }

    const std::vector<std::pair<std::string, Var<T>>>& entries() const { return entries_; }
    std::size_t count() const { return entries_.size(); }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    Var<T> get(const std::string& name) const {
        auto it = index_.find(name);
        require(it != index_.end(), "unknown parameter '", name, "'");
        return entries_[it->second].second;
    }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& [_, v] : entries_) n += v.size();
        return n;
    }

    /// Stops gradient flow into every parameter whose name starts with `prefix`.
    void freeze(const std::string& prefix) {
        for (auto& [name, v] : entries_)
            if (name.rfind(prefix, 0) == 0) v.set_requires_grad(false);
    }

    void zero_grad() {
        for (auto& [_, v] : entries_) v.zero_grad();
    }

private:
    std::vector<std::pair<std::string, Var<T>>> entries_;
    std::map<std::string, std::size_t> index_;
};

template <typename T>
struct Conv2d {
    Var<T> weight, bias;
    int stride = 1, pad = 0, groups = 1;

    Conv2d() = default;
    Conv2d(ParamStore<T>& ps, const std::string& name, int in, int out, int k, int stride_, int pad_, Rng& rng,
           int groups_ = 1, bool with_bias = true, Init init = Init::uniform_fan_in)
        : stride(stride_), pad(pad_), groups(groups_) {
        const int fan_in = in / groups_ * k * k;
        weight = ps.create(name + "/weight", {out, in / groups_, k, k}, init, rng, fan_in);
        if (with_bias) bias = ps.create(name + "/bias", {out}, init == Init::zeros ? Init::zeros : Init::uniform_fan_in, rng, fan_in);
    }

    Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias, stride, pad, groups); }
    int out_channels() const { return weight.dim(0); }
};

template <typename T>
struct ConvTranspose2d {
    Var<T> weight, bias;
    int stride = 1, pad = 0, out_pad = 0;

    ConvTranspose2d() = default;
    ConvTranspose2d(ParamStore<T>& ps, const std::string& name, int in, int out, int k, int stride_, int pad_, Rng& rng,
                    int out_pad_ = 0, Init init = Init::uniform_fan_in)
        : stride(stride_), pad(pad_), out_pad(out_pad_) {
        const int fan_in = out * k * k;
        weight = ps.create(name + "/weight", {in, out, k, k}, init, rng, fan_in);
        bias = ps.create(name + "/bias", {out}, init == Init::zeros ? Init::zeros : Init::uniform_fan_in, rng, fan_in);
    }

    Var<T> operator()(const Var<T>& x) const { return conv_transpose2d(x, weight, bias, stride, pad, out_pad); }
};

template <typename T>
struct Linear {
    Var<T> weight, bias;

    Linear() = default;
    Linear(ParamStore<T>& ps, const std::string& name, int in, int out, Rng& rng, Init init = Init::uniform_fan_in) {
        weight = ps.create(name + "/weight", {out, in}, init, rng, in);
        bias = ps.create(name + "/bias", {out}, init == Init::zeros ? Init::zeros : Init::uniform_fan_in, rng, in);
    }

    Var<T> operator()(const Var<T>& x) const { return linear(x, weight, bias); }
};

/// Group normalisation with a learned per-channel affine.
template <typename T>
struct GroupNorm {
    Var<T> gamma, beta;
    int groups = 1;

    GroupNorm() = default;
    GroupNorm(ParamStore<T>& ps, const std::string& name, int channels, int groups_, Rng& rng) : groups(groups_) {
        gamma = ps.create(name + "/gamma", {channels}, Init::ones, rng);
        beta = ps.create(name + "/beta", {channels}, Init::zeros, rng);
    }

    Var<T> operator()(const Var<T>& x) const { return channel_affine(group_norm(x, groups), gamma, beta); }
};

/// Largest divisor of `channels` not exceeding `preferred`.
inline int norm_groups(int channels, int preferred = 8) {
    for (int g = std::min(preferred, channels); g > 1; --g)
        if (channels % g == 0) return g;
    return 1;
}

/// Sinusoidal embedding of integer timesteps: [N, dim].
template <typename T>
Tensor<T> timestep_embedding(const std::vector<int>& steps, int dim) {
    require(dim % 2 == 0 && dim >= 2, "timestep embedding dimension must be even");
    const int half = dim / 2;
    Tensor<T> out({static_cast<int>(steps.size()), dim});
    for (std::size_t i = 0; i < steps.size(); ++i)
        for (int j = 0; j < half; ++j) {
            const double freq = std::exp(-std::log(10000.0) * j / half);
            const double a = steps[i] * freq;
            out[i * dim + j] = static_cast<T>(std::sin(a));
            out[i * dim + half + j] = static_cast<T>(std::cos(a));
        }
    return out;
}

}  // namespace rr::nn
