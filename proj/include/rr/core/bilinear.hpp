// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace rr {

/// One output coordinate of a half-pixel-centred bilinear resize: the two
/// source taps and the weight of the upper tap. Samples outside the source
/// are clamped to the border.
struct BilinearTap {
    int lo = 0;
    int hi = 0;
    double frac = 0.0;
};

inline std::vector<BilinearTap> bilinear_taps(int in, int out) {
    std::vector<BilinearTap> taps(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
        double src = (i + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const int lo = static_cast<int>(src);
        const int hi = std::min(lo + 1, in - 1);
        taps[static_cast<std::size_t>(i)] = {lo, hi, src - lo};
    }
    return taps;
}

/// Resizes one [h, w] plane into [ho, wo].
template <typename T>
void resize_plane_bilinear(const T* src, int h, int w, T* dst, int ho, int wo) {
    const auto ty = bilinear_taps(h, ho);
    const auto tx = bilinear_taps(w, wo);
    for (int y = 0; y < ho; ++y) {
        const auto& a = ty[static_cast<std::size_t>(y)];
        const T* r0 = src + static_cast<std::size_t>(a.lo) * w;
        const T* r1 = src + static_cast<std::size_t>(a.hi) * w;
        for (int x = 0; x < wo; ++x) {
            const auto& b = tx[static_cast<std::size_t>(x)];
            const double top = r0[b.lo] + (r0[b.hi] - r0[b.lo]) * b.frac;
            const double bot = r1[b.lo] + (r1[b.hi] - r1[b.lo]) * b.frac;
            dst[static_cast<std::size_t>(y) * wo + x] = static_cast<T>(top + (bot - top) * a.frac);
        }
    }
}

/// Adjoint of resize_plane_bilinear; accumulates into `src_grad`.
template <typename T>
void resize_plane_bilinear_adjoint(const T* dst_grad, int ho, int wo, T* src_grad, int h, int w) {
    const auto ty = bilinear_taps(h, ho);
    const auto tx = bilinear_taps(w, wo);
    for (int y = 0; y < ho; ++y) {
        const auto& a = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < wo; ++x) {
            const auto& b = tx[static_cast<std::size_t>(x)];
            const T g = dst_grad[static_cast<std::size_t>(y) * wo + x];
            const T wy1 = static_cast<T>(a.frac), wy0 = T(1) - wy1;
            const T wx1 = static_cast<T>(b.frac), wx0 = T(1) - wx1;
            src_grad[static_cast<std::size_t>(a.lo) * w + b.lo] += g * wy0 * wx0;
            src_grad[static_cast<std::size_t>(a.lo) * w + b.hi] += g * wy0 * wx1;
            src_grad[static_cast<std::size_t>(a.hi) * w + b.lo] += g * wy1 * wx0;
            src_grad[static_cast<std::size_t>(a.hi) * w + b.hi] += g * wy1 * wx1;
        }
    }
}

}  // namespace rr
