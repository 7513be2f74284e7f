// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include "rr/diffusion/schedule.hpp"

namespace rr {

NoiseSchedule schedule_from_betas(const std::vector<double>& beta) {
    require(!beta.empty(), "schedule needs at least one step");
    NoiseSchedule s;
    s.T = static_cast<int>(beta.size());
    s.beta = beta;
    s.alpha.resize(beta.size());
    s.alpha_bar.assign(beta.size() + 1, 1.0);
    for (std::size_t i = 0; i < beta.size(); ++i) {
        require(beta[i] > 0.0 && beta[i] < 1.0, "beta_", i + 1, "=", beta[i], " outside (0, 1)");
        s.alpha[i] = 1.0 - beta[i];
        s.alpha_bar[i + 1] = s.alpha_bar[i] * s.alpha[i];
    }
    return s;
}

NoiseSchedule make_schedule(int T, double beta_start, double beta_end, ScheduleKind kind) {
    require(kind == ScheduleKind::linear, "unsupported schedule kind");
    require(T >= 1, "schedule length must be >= 1, got ", T);
    require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
            "need 0 < beta_start <= beta_end < 1, got ", beta_start, ", ", beta_end);
    std::vector<double> beta(static_cast<std::size_t>(T));
    for (int t = 1; t <= T; ++t)
        beta[static_cast<std::size_t>(t - 1)] =
            T == 1 ? beta_start : beta_start + (beta_end - beta_start) * (t - 1) / (T - 1);
    return schedule_from_betas(beta);
}

}  // namespace rr
