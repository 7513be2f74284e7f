// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

namespace rr::nn::detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// C[m,n] (+)= op(A) * op(B); A, B, C row-major.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
    MatMap<T> cm(c, m, n);
    if (!trans_a && !trans_b) {
        ConstMatMap<T> am(a, m, k), bm(b, k, n);
        if (accumulate) cm.noalias() += am * bm; else cm.noalias() = am * bm;
    } else if (trans_a && !trans_b) {
        ConstMatMap<T> am(a, k, m), bm(b, k, n);
        if (accumulate) cm.noalias() += am.transpose() * bm; else cm.noalias() = am.transpose() * bm;
    } else if (!trans_a && trans_b) {
        ConstMatMap<T> am(a, m, k), bm(b, n, k);
        if (accumulate) cm.noalias() += am * bm.transpose(); else cm.noalias() = am * bm.transpose();
    } else {
        ConstMatMap<T> am(a, k, m), bm(b, n, k);
        if (accumulate) cm.noalias() += am.transpose() * bm.transpose();
        else cm.noalias() = am.transpose() * bm.transpose();
    }
}

// Patch matrix [c*k*k, ho*wo] of one image plane stack [c, h, w].
template <typename T>
void im2col(const T* x, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* col) {
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = col + (static_cast<std::size_t>(ci * k + ky) * k + kx) * ho * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    T* dst = row + static_cast<std::size_t>(oy) * wo;
                    if (iy < 0 || iy >= h) {
                        for (int ox = 0; ox < wo; ++ox) dst[ox] = T(0);
                        continue;
                    }
                    const T* src = x + (static_cast<std::size_t>(ci) * h + iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters patch columns back into [c, h, w] (accumulating).
template <typename T>
void col2im(const T* col, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* x) {
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = col + (static_cast<std::size_t>(ci * k + ky) * k + kx) * ho * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    const T* src = row + static_cast<std::size_t>(oy) * wo;
                    T* dst = x + (static_cast<std::size_t>(ci) * h + iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace rr::nn::detail
