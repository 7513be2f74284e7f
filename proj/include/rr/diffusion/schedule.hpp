// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rr/core/rng.hpp"
#include "rr/nn/ops.hpp"

namespace rr {

enum class ScheduleKind { linear };

/// beta, alpha and alpha_bar for t = 1..T. alpha_bar additionally holds
/// alpha_bar_0 = 1, so alpha_bar.size() == T + 1.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;       // beta[t - 1]
    std::vector<double> alpha;      // alpha[t - 1]
    std::vector<double> alpha_bar;  // alpha_bar[t], t = 0..T

    double beta_at(int t) const { return beta.at(static_cast<std::size_t>(t - 1)); }
    double alpha_at(int t) const { return alpha.at(static_cast<std::size_t>(t - 1)); }
    double alpha_bar_at(int t) const { return alpha_bar.at(static_cast<std::size_t>(t)); }
};

/// Linear beta from beta_start (t = 1) to beta_end (t = T).
NoiseSchedule make_schedule(int T, double beta_start = 1e-4, double beta_end = 0.02,
                            ScheduleKind kind = ScheduleKind::linear);

/// Rebuilds a schedule from stored betas (checkpoint arrays).
NoiseSchedule schedule_from_betas(const std::vector<double>& beta);

/// One reverse update on a scalar:
///   (x - (1 - alpha) / sqrt(1 - alpha_bar) * eps_theta) / sqrt(alpha) + sqrt(beta) * eps
/// with the last term dropped when noise_on is false.
inline double reverse_step_scalar(double x, double alpha, double alpha_bar, double beta, double eps_theta, double eps,
                                  bool noise_on) {
    const double mean = (x - (1.0 - alpha) / std::sqrt(1.0 - alpha_bar) * eps_theta) / std::sqrt(alpha);
    return noise_on ? mean + std::sqrt(beta) * eps : mean;
}

/// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps, unclamped.
template <typename T>
nn::Tensor<T> q_sample(const nn::Tensor<T>& x0, int t, const nn::Tensor<T>& eps, const NoiseSchedule& s) {
    require(t >= 0 && t <= s.T, "q_sample: t=", t, " outside [0, ", s.T, "]");
    require(x0.shape() == eps.shape(), "q_sample: eps shape ", nn::shape_str(eps.shape()), " differs from x0 ",
            nn::shape_str(x0.shape()));
    const double a = std::sqrt(s.alpha_bar_at(t)), b = std::sqrt(1.0 - s.alpha_bar_at(t));
    nn::Tensor<T> out(x0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(a * x0[i] + b * eps[i]);
    return out;
}

/// Batched forward corruption with one timestep per sample (dim 0).
template <typename T>
nn::Tensor<T> q_sample(const nn::Tensor<T>& x0, const std::vector<int>& t, const nn::Tensor<T>& eps,
                       const NoiseSchedule& s) {
    require(x0.shape() == eps.shape(), "q_sample: eps/x0 shape mismatch");
    require(static_cast<int>(t.size()) == x0.dim(0), "q_sample: need one timestep per sample");
    const std::size_t per = x0.size() / t.size();
    nn::Tensor<T> out(x0.shape());
    for (std::size_t n = 0; n < t.size(); ++n) {
        require(t[n] >= 0 && t[n] <= s.T, "q_sample: t=", t[n], " outside [0, ", s.T, "]");
        const double a = std::sqrt(s.alpha_bar_at(t[n])), b = std::sqrt(1.0 - s.alpha_bar_at(t[n]));
        for (std::size_t i = n * per; i < (n + 1) * per; ++i) out[i] = static_cast<T>(a * x0[i] + b * eps[i]);
    }
    return out;
}

/// Reverse update of a whole tensor at step t (1 <= t <= T).
template <typename T>
nn::Tensor<T> reverse_step(const nn::Tensor<T>& x, int t, const nn::Tensor<T>& eps_theta, const NoiseSchedule& s,
                           const nn::Tensor<T>& eps, bool noise_on) {
    require(t >= 1 && t <= s.T, "reverse_step: t=", t, " outside [1, ", s.T, "]");
    require(x.shape() == eps_theta.shape(), "reverse_step: eps_theta shape mismatch");
    require(!noise_on || x.shape() == eps.shape(), "reverse_step: eps shape mismatch");
    const double a = s.alpha_at(t), ab = s.alpha_bar_at(t), b = s.beta_at(t);
    nn::Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<T>(reverse_step_scalar(x[i], a, ab, b, eps_theta[i], noise_on ? eps[i] : 0.0, noise_on));
    return out;
}

/// Mean squared error between predicted and true noise (NaN -> NumericError).
template <typename T>
nn::Var<T> noise_mse_loss(const nn::Var<T>& eps_theta, const nn::Var<T>& eps) {
    return nn::mse_loss(eps_theta, eps);
}

/// Predicts noise for state x at step t.
template <typename T>
using NoisePredictor = std::function<nn::Tensor<T>(const nn::Tensor<T>& x, int t)>;

template <typename T>
nn::Tensor<T> gaussian_tensor(const nn::Shape& shape, Rng& rng) {
    nn::Tensor<T> out(shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(rng.normal());
    return out;
}

/// Runs reverse steps from t_start down to 1; the fresh-noise term is off at
/// t = 1 (and everywhere when stochastic is false).
template <typename T>
nn::Tensor<T> sample_restore(const nn::Tensor<T>& x_start, int t_start, const NoisePredictor<T>& model,
                             const NoiseSchedule& s, Rng& rng, bool stochastic = true) {
    require(t_start >= 1 && t_start <= s.T, "sample_restore: t_start=", t_start, " outside [1, ", s.T, "]");
    nn::Tensor<T> x = x_start;
    for (int t = t_start; t >= 1; --t) {
        const nn::Tensor<T> eps_theta = model(x, t);
        const bool noise_on = stochastic && t > 1;
        const nn::Tensor<T> eps = noise_on ? gaussian_tensor<T>(x.shape(), rng) : nn::Tensor<T>();
        x = reverse_step(x, t, eps_theta, s, eps, noise_on);
    }
    return x;
}

}  // namespace rr
