// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "rr/nn/layers.hpp"

namespace rr::nn {

/// Adam over every trainable entry of a ParamStore. Gradients are cleared
/// after each step.
template <typename T>
class Adam {
public:
    struct Options {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    Adam(ParamStore<T>& params, Options opt) : params_(params), opt_(opt) {
        for (const auto& [_, v] : params_.entries()) {
            m_.emplace_back(v.size(), T(0));
            v_.emplace_back(v.size(), T(0));
        }
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(opt_.beta1, t_);
        const double c2 = 1.0 - std::pow(opt_.beta2, t_);
        const auto& entries = params_.entries();
        for (std::size_t k = 0; k < entries.size(); ++k) {
            Var<T> p = entries[k].second;
            if (!p.requires_grad()) continue;
            Tensor<T>& g = p.mutable_grad();
            Tensor<T>& w = p.mutable_value();
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = g[i];
                m[i] = static_cast<T>(opt_.beta1 * m[i] + (1.0 - opt_.beta1) * gi);
                v[i] = static_cast<T>(opt_.beta2 * v[i] + (1.0 - opt_.beta2) * gi * gi);
                const double mh = m[i] / c1, vh = v[i] / c2;
                w[i] = static_cast<T>(w[i] - opt_.lr * mh / (std::sqrt(vh) + opt_.eps));
            }
            g.fill(T(0));
        }
    }

private:
    ParamStore<T>& params_;
    Options opt_;
    std::vector<std::vector<T>> m_, v_;
    long t_ = 0;
};

/// RMSprop (no momentum, no centring).
template <typename T>
class RmsProp {
public:
    struct Options {
        double lr = 1e-4;
        double rho = 0.9;
        double eps = 1e-7;
    };

    RmsProp(ParamStore<T>& params, Options opt) : params_(params), opt_(opt) {
        for (const auto& [_, v] : params_.entries()) sq_.emplace_back(v.size(), T(0));
    }

    void step() {
        const auto& entries = params_.entries();
        for (std::size_t k = 0; k < entries.size(); ++k) {
            Var<T> p = entries[k].second;
            if (!p.requires_grad()) continue;
            Tensor<T>& g = p.mutable_grad();
            Tensor<T>& w = p.mutable_value();
            auto& s = sq_[k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = g[i];
                s[i] = static_cast<T>(opt_.rho * s[i] + (1.0 - opt_.rho) * gi * gi);
                w[i] = static_cast<T>(w[i] - opt_.lr * gi / (std::sqrt(static_cast<double>(s[i])) + opt_.eps));
            }
            g.fill(T(0));
        }
    }

private:
    ParamStore<T>& params_;
    Options opt_;
    std::vector<std::vector<T>> sq_;
};

}  // namespace rr::nn
