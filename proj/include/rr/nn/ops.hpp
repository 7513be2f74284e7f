// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "rr/core/bilinear.hpp"
#include "rr/nn/autograd.hpp"
#include "rr/nn/gemm.hpp"

namespace rr::nn {

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require(a.shape() == b.shape(), "add: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
    Tensor<T> out(a.shape());
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return Var<T>::make(std::move(out), {a, b}, [](Node<T>& n) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (auto* g = parent_grad(n, k)) {
                for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i];
            }
        }
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    require(a.shape() == b.shape(), "sub: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    return Var<T>::make(std::move(out), {a, b}, [](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i];
        if (auto* g = parent_grad(n, 1))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= n.grad[i];
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    require(a.shape() == b.shape(), "mul: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return Var<T>::make(std::move(out), {a, b}, [](Node<T>& n) {
        const auto& av = n.parents[0]->value;
        const auto& bv = n.parents[1]->value;
        if (auto* g = parent_grad(n, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] * bv[i];
        if (auto* g = parent_grad(n, 1))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] * av[i];
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> out = a.value().map([s](T v) { return v * s; });
    return Var<T>::make(std::move(out), {a}, [s](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] * s;
    });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
    Tensor<T> out = a.value().map([s](T v) { return v + s; });
    return Var<T>::make(std::move(out), {a}, [](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i];
    });
}

/// x * s where s is a single-element Var (a learned gate, for example).
template <typename T>
Var<T> mul_scalar_var(const Var<T>& x, const Var<T>& s) {
    require(s.size() == 1, "mul_scalar_var: gate must have one element");
    const T sv = s.value()[0];
    Tensor<T> out = x.value().map([sv](T v) { return v * sv; });
    return Var<T>::make(std::move(out), {x, s}, [](Node<T>& n) {
        const auto& xv = n.parents[0]->value;
        const T sv = n.parents[1]->value[0];
        if (auto* g = parent_grad(n, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] * sv;
        if (auto* g = parent_grad(n, 1)) {
            T acc = 0;
            for (std::size_t i = 0; i < xv.size(); ++i) acc += n.grad[i] * xv[i];
            (*g)[0] += acc;
        }
    });
}

namespace detail {

template <typename T, typename F, typename D>
Var<T> unary(const Var<T>& a, F f, D dfdx_from_xy) {
    Tensor<T> out = a.value().map(f);
    return Var<T>::make(std::move(out), {a}, [dfdx_from_xy](Node<T>& n) {
        if (auto* g = parent_grad(n, 0)) {
            const auto& xv = n.parents[0]->value;
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] * dfdx_from_xy(xv[i], n.value[i]);
        }
    });
}

}  // namespace detail

template <typename T>
Var<T> relu(const Var<T>& a) {
    return detail::unary(
        a, [](T v) { return v > T(0) ? v : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
    return detail::unary(
        a, [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> silu(const Var<T>& a) {
    return detail::unary(
        a, [](T v) { return v / (T(1) + std::exp(-v)); },
        [](T x, T) {
            const T s = T(1) / (T(1) + std::exp(-x));
            return s * (T(1) + x * (T(1) - s));
        });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
    return detail::unary(a, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

/// Clamp with the derivative of the clamped function (zero outside the band).
template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
    return detail::unary(
        a, [lo, hi](T v) { return std::clamp(v, lo, hi); },
        [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// Broadcasting helpers
// ---------------------------------------------------------------------------

/// x[N, C, ...] + v[N, C] broadcast over trailing dims.
template <typename T>
Var<T> add_nc(const Var<T>& x, const Var<T>& v) {
    require(x.value().ndim() >= 2 && v.value().ndim() == 2 && v.dim(0) == x.dim(0) && v.dim(1) == x.dim(1),
            "add_nc: incompatible shapes ", shape_str(x.shape()), " and ", shape_str(v.shape()));
    const int nc = x.dim(0) * x.dim(1);
    const std::size_t inner = x.size() / static_cast<std::size_t>(nc);
    Tensor<T> out = x.value();
    for (int j = 0; j < nc; ++j) {
        const T b = v.value()[static_cast<std::size_t>(j)];
        T* p = out.data() + j * inner;
        for (std::size_t i = 0; i < inner; ++i) p[i] += b;
    }
    return Var<T>::make(std::move(out), {x, v}, [nc, inner](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i];
        if (auto* g = parent_grad(n, 1)) {
            for (int j = 0; j < nc; ++j) {
                T acc = 0;
                const T* p = n.grad.data() + j * inner;
                for (std::size_t i = 0; i < inner; ++i) acc += p[i];
                (*g)[static_cast<std::size_t>(j)] += acc;
            }
        }
    });
}

/// Per-channel affine y = x * gamma[c] + beta[c] for x[N, C, ...].
template <typename T>
Var<T> channel_affine(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta) {
    const int n_ = x.dim(0), c_ = x.dim(1);
    require(static_cast<int>(gamma.size()) == c_ && static_cast<int>(beta.size()) == c_,
            "channel_affine: parameter size does not match ", c_, " channels");
    const std::size_t inner = x.size() / static_cast<std::size_t>(n_ * c_);
    Tensor<T> out(x.shape());
    for (int b = 0; b < n_; ++b)
        for (int c = 0; c < c_; ++c) {
            const T gm = gamma.value()[static_cast<std::size_t>(c)], bt = beta.value()[static_cast<std::size_t>(c)];
            const std::size_t off = (static_cast<std::size_t>(b) * c_ + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) out[off + i] = x.value()[off + i] * gm + bt;
        }
    return Var<T>::make(std::move(out), {x, gamma, beta}, [n_, c_, inner](Node<T>& n) {
        const auto& xv = n.parents[0]->value;
        const auto& gv = n.parents[1]->value;
        auto* gx = parent_grad(n, 0);
        auto* gg = parent_grad(n, 1);
        auto* gb = parent_grad(n, 2);
        for (int b = 0; b < n_; ++b)
            for (int c = 0; c < c_; ++c) {
                const std::size_t off = (static_cast<std::size_t>(b) * c_ + c) * inner;
                T sg = 0, sb = 0;
                for (std::size_t i = 0; i < inner; ++i) {
                    const T d = n.grad[off + i];
                    if (gx) (*gx)[off + i] += d * gv[static_cast<std::size_t>(c)];
                    sg += d * xv[off + i];
                    sb += d;
                }
                if (gg) (*gg)[static_cast<std::size_t>(c)] += sg;
                if (gb) (*gb)[static_cast<std::size_t>(c)] += sb;
            }
    });
}

/// Repeats a batch-1 tensor `count` times along dim 0.
template <typename T>
Var<T> repeat_batch(const Var<T>& x, int count) {
    require(x.dim(0) == 1, "repeat_batch expects a batch of one, got ", shape_str(x.shape()));
    Shape s = x.shape();
    s[0] = count;
    Tensor<T> out(s);
    const std::size_t m = x.size();
    for (int b = 0; b < count; ++b) std::copy(x.value().data(), x.value().data() + m, out.data() + b * m);
    return Var<T>::make(std::move(out), {x}, [count, m](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            for (int b = 0; b < count; ++b)
                for (std::size_t i = 0; i < m; ++i) (*g)[i] += n.grad[b * m + i];
    });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
    Tensor<T> out = x.value().reshaped(std::move(shape));
    return Var<T>::make(std::move(out), {x}, [](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i];
    });
}

/// Concatenation along `axis` (all other dims equal).
template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis = 1) {
    require(!xs.empty(), "concat of nothing");
    const Shape& s0 = xs[0].shape();
    require(axis >= 0 && axis < static_cast<int>(s0.size()), "concat: bad axis ", axis);
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s0[static_cast<std::size_t>(i)]);
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s0.size(); ++i) inner *= static_cast<std::size_t>(s0[i]);
    std::vector<std::size_t> widths;
    int total = 0;
    for (const auto& x : xs) {
        const Shape& s = x.shape();
        require(s.size() == s0.size(), "concat: rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i)
            if (static_cast<int>(i) != axis)
                require(s[i] == s0[i], "concat: shape mismatch ", shape_str(s), " vs ", shape_str(s0));
        total += s[static_cast<std::size_t>(axis)];
        widths.push_back(static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]) * inner);
    }
    Shape so = s0;
    so[static_cast<std::size_t>(axis)] = total;
    Tensor<T> out(so);
    const std::size_t row = static_cast<std::size_t>(total) * inner;
    std::size_t off = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(xs[k].value().data() + o * widths[k], widths[k], out.data() + o * row + off);
        off += widths[k];
    }
    return Var<T>::make(std::move(out), xs, [widths, outer, row](Node<T>& n) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
            if (auto* g = parent_grad(n, k))
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t i = 0; i < widths[k]; ++i) (*g)[o * widths[k] + i] += n.grad[o * row + off + i];
            off += widths[k];
        }
    });
}

/// Slice [start, start+len) along `axis`.
template <typename T>
Var<T> slice(const Var<T>& x, int axis, int start, int len) {
    const Shape& s = x.shape();
    require(axis >= 0 && axis < static_cast<int>(s.size()), "slice: bad axis ", axis);
    const int extent = s[static_cast<std::size_t>(axis)];
    require(start >= 0 && len >= 0 && start + len <= extent, "slice [", start, ", ", start + len,
            ") out of range for extent ", extent);
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) inner *= static_cast<std::size_t>(s[i]);
    Shape so = s;
    so[static_cast<std::size_t>(axis)] = len;
    Tensor<T> out(so);
    const std::size_t src_row = static_cast<std::size_t>(extent) * inner;
    const std::size_t dst_row = static_cast<std::size_t>(len) * inner;
    const std::size_t off = static_cast<std::size_t>(start) * inner;
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(x.value().data() + o * src_row + off, dst_row, out.data() + o * dst_row);
    return Var<T>::make(std::move(out), {x}, [outer, src_row, dst_row, off](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t i = 0; i < dst_row; ++i) (*g)[o * src_row + off + i] += n.grad[o * dst_row + i];
    });
}

template <typename T>
Var<T> transpose2d(const Var<T>& x) {
    require(x.value().ndim() == 2, "transpose2d expects a matrix");
    const int r = x.dim(0), c = x.dim(1);
    Tensor<T> out({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(j) * r + i] = x.value()[static_cast<std::size_t>(i) * c + j];
    return Var<T>::make(std::move(out), {x}, [r, c](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j)
                    (*g)[static_cast<std::size_t>(i) * c + j] += n.grad[static_cast<std::size_t>(j) * r + i];
    });
}

// ---------------------------------------------------------------------------
// Dense algebra
// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    require(a.value().ndim() == 2 && b.value().ndim() == 2 && a.dim(1) == b.dim(0), "matmul: incompatible shapes ",
            shape_str(a.shape()), " x ", shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), nn = b.dim(1);
    Tensor<T> out({m, nn});
    detail::gemm(false, false, m, nn, k, a.value().data(), b.value().data(), out.data(), false);
    return Var<T>::make(std::move(out), {a, b}, [m, k, nn](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            detail::gemm(false, true, m, k, nn, n.grad.data(), n.parents[1]->value.data(), g->data(), true);
        if (auto* g = parent_grad(n, 1))
            detail::gemm(true, false, k, nn, m, n.parents[0]->value.data(), n.grad.data(), g->data(), true);
    });
}

/// y[N, out] = x[N, in] * W[out, in]^T + b[out]. `b` may be undefined.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    require(x.value().ndim() == 2 && w.value().ndim() == 2 && x.dim(1) == w.dim(1), "linear: input ",
            shape_str(x.shape()), " does not match weight ", shape_str(w.shape()));
    const int nb = x.dim(0), in = x.dim(1), out_f = w.dim(0);
    Tensor<T> out({nb, out_f});
    detail::gemm(false, true, nb, out_f, in, x.value().data(), w.value().data(), out.data(), false);
    const bool has_bias = b.defined();
    if (has_bias) {
        require(static_cast<int>(b.size()) == out_f, "linear: bias size mismatch");
        for (int i = 0; i < nb; ++i)
            for (int j = 0; j < out_f; ++j) out[static_cast<std::size_t>(i) * out_f + j] += b.value()[static_cast<std::size_t>(j)];
    }
    std::vector<Var<T>> parents{x, w};
    if (has_bias) parents.push_back(b);
    return Var<T>::make(std::move(out), parents, [nb, in, out_f, has_bias](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            detail::gemm(false, false, nb, in, out_f, n.grad.data(), n.parents[1]->value.data(), g->data(), true);
        if (auto* g = parent_grad(n, 1))
            detail::gemm(true, false, out_f, in, nb, n.grad.data(), n.parents[0]->value.data(), g->data(), true);
        if (has_bias) {
            if (auto* g = parent_grad(n, 2))
                for (int i = 0; i < nb; ++i)
                    for (int j = 0; j < out_f; ++j) (*g)[static_cast<std::size_t>(j)] += n.grad[static_cast<std::size_t>(i) * out_f + j];
        }
    });
}

/// Row-wise softmax of a matrix.
template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
    require(x.value().ndim() == 2, "softmax_rows expects a matrix");
    const int r = x.dim(0), c = x.dim(1);
    Tensor<T> out({r, c});
    for (int i = 0; i < r; ++i) {
        const T* src = x.value().data() + static_cast<std::size_t>(i) * c;
        T* dst = out.data() + static_cast<std::size_t>(i) * c;
        const T mx = *std::max_element(src, src + c);
        T sum = 0;
        for (int j = 0; j < c; ++j) sum += (dst[j] = std::exp(src[j] - mx));
        for (int j = 0; j < c; ++j) dst[j] /= sum;
    }
    return Var<T>::make(std::move(out), {x}, [r, c](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            for (int i = 0; i < r; ++i) {
                const T* y = n.value.data() + static_cast<std::size_t>(i) * c;
                const T* dy = n.grad.data() + static_cast<std::size_t>(i) * c;
                T dot = 0;
                for (int j = 0; j < c; ++j) dot += y[j] * dy[j];
                for (int j = 0; j < c; ++j) (*g)[static_cast<std::size_t>(i) * c + j] += y[j] * (dy[j] - dot);
            }
    });
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

inline int conv_out_size(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

/// Grouped 2-D convolution. x[N, C, H, W], w[O, C/groups, k, k], b[O] or undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride = 1, int pad = 0, int groups = 1) {
    require(x.value().ndim() == 4 && w.value().ndim() == 4, "conv2d expects NCHW input and OIkk weight");
    const int nb = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int o = w.dim(0), k = w.dim(2);
    require(groups >= 1 && c % groups == 0 && o % groups == 0 && w.dim(1) == c / groups && w.dim(3) == k,
            "conv2d: weight ", shape_str(w.shape()), " incompatible with input ", shape_str(x.shape()), " groups ", groups);
    const int ho = conv_out_size(h, k, stride, pad), wo = conv_out_size(wd, k, stride, pad);
    require(ho >= 1 && wo >= 1, "conv2d: input ", shape_str(x.shape()), " too small for kernel ", k);
    const int cg = c / groups, og = o / groups;
    const int kdim = cg * k * k, pix = ho * wo;
    const bool direct = (k == 1 && stride == 1 && pad == 0);
    const bool has_bias = b.defined();

    Tensor<T> out({nb, o, ho, wo});
    std::vector<T> col(direct ? 0 : static_cast<std::size_t>(kdim) * pix);
    const std::size_t in_plane = static_cast<std::size_t>(h) * wd;
    for (int n = 0; n < nb; ++n)
        for (int g = 0; g < groups; ++g) {
            const T* xin = x.value().data() + (static_cast<std::size_t>(n) * c + g * cg) * in_plane;
            const T* src = xin;
            if (!direct) {
                detail::im2col(xin, cg, h, wd, k, stride, pad, ho, wo, col.data());
                src = col.data();
            }
            T* dst = out.data() + (static_cast<std::size_t>(n) * o + g * og) * pix;
            detail::gemm(false, false, og, pix, kdim, w.value().data() + static_cast<std::size_t>(g) * og * kdim, src, dst,
                         false);
        }
    if (has_bias) {
        require(static_cast<int>(b.size()) == o, "conv2d: bias size mismatch");
        for (int n = 0; n < nb; ++n)
            for (int oc = 0; oc < o; ++oc) {
                T* p = out.data() + (static_cast<std::size_t>(n) * o + oc) * pix;
                const T bv = b.value()[static_cast<std::size_t>(oc)];
                for (int i = 0; i < pix; ++i) p[i] += bv;
            }
    }
    std::vector<Var<T>> parents{x, w};
    if (has_bias) parents.push_back(b);
    return Var<T>::make(std::move(out), parents, [=](Node<T>& nd) {
        const auto& xv = nd.parents[0]->value;
        const auto& wv = nd.parents[1]->value;
        auto* gx = parent_grad(nd, 0);
        auto* gw = parent_grad(nd, 1);
        std::vector<T> colb(direct ? 0 : static_cast<std::size_t>(kdim) * pix);
        std::vector<T> dcol(static_cast<std::size_t>(kdim) * pix);
        for (int n = 0; n < nb; ++n)
            for (int g = 0; g < groups; ++g) {
                const T* dy = nd.grad.data() + (static_cast<std::size_t>(n) * o + g * og) * pix;
                const T* xin = xv.data() + (static_cast<std::size_t>(n) * c + g * cg) * in_plane;
                if (gw) {
                    const T* src = xin;
                    if (!direct) {
                        detail::im2col(xin, cg, h, wd, k, stride, pad, ho, wo, colb.data());
                        src = colb.data();
                    }
                    detail::gemm(false, true, og, kdim, pix, dy, src, gw->data() + static_cast<std::size_t>(g) * og * kdim, true);
                }
                if (gx) {
                    T* gxin = gx->data() + (static_cast<std::size_t>(n) * c + g * cg) * in_plane;
                    const T* wg = wv.data() + static_cast<std::size_t>(g) * og * kdim;
                    if (direct) {
                        detail::gemm(true, false, kdim, pix, og, wg, dy, gxin, true);
                    } else {
                        detail::gemm(true, false, kdim, pix, og, wg, dy, dcol.data(), false);
                        detail::col2im(dcol.data(), cg, h, wd, k, stride, pad, ho, wo, gxin);
                    }
                }
            }
        if (has_bias) {
            if (auto* gb = parent_grad(nd, 2))
                for (int n = 0; n < nb; ++n)
                    for (int oc = 0; oc < o; ++oc) {
                        const T* p = nd.grad.data() + (static_cast<std::size_t>(n) * o + oc) * pix;
                        T acc = 0;
                        for (int i = 0; i < pix; ++i) acc += p[i];
                        (*gb)[static_cast<std::size_t>(oc)] += acc;
                    }
        }
    });
}

inline int conv_transpose_out_size(int in, int k, int stride, int pad, int out_pad) {
    return (in - 1) * stride - 2 * pad + k + out_pad;
}

/// Transposed convolution. x[N, Cin, H, W], w[Cin, Cout, k, k], b[Cout] or undefined.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride = 1, int pad = 0,
                        int out_pad = 0) {
    require(x.value().ndim() == 4 && w.value().ndim() == 4 && w.dim(0) == x.dim(1) && w.dim(2) == w.dim(3),
            "conv_transpose2d: weight ", shape_str(w.shape()), " incompatible with input ", shape_str(x.shape()));
    require(out_pad >= 0 && out_pad < stride, "conv_transpose2d: output padding must be < stride");
    const int nb = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(1), k = w.dim(2);
    const int ho = conv_transpose_out_size(h, k, stride, pad, out_pad);
    const int wo = conv_transpose_out_size(wd, k, stride, pad, out_pad);
    require(ho >= 1 && wo >= 1, "conv_transpose2d: empty output");
    const int kdim = cout * k * k, pix = h * wd;
    const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
    const bool has_bias = b.defined();

    Tensor<T> out({nb, cout, ho, wo});
    std::vector<T> col(static_cast<std::size_t>(kdim) * pix);
    for (int n = 0; n < nb; ++n) {
        const T* xin = x.value().data() + static_cast<std::size_t>(n) * cin * pix;
        detail::gemm(true, false, kdim, pix, cin, w.value().data(), xin, col.data(), false);
        detail::col2im(col.data(), cout, ho, wo, k, stride, pad, h, wd, out.data() + static_cast<std::size_t>(n) * cout * out_plane);
    }
    if (has_bias) {
        require(static_cast<int>(b.size()) == cout, "conv_transpose2d: bias size mismatch");
        for (int n = 0; n < nb; ++n)
            for (int oc = 0; oc < cout; ++oc) {
                T* p = out.data() + (static_cast<std::size_t>(n) * cout + oc) * out_plane;
                const T bv = b.value()[static_cast<std::size_t>(oc)];
                for (std::size_t i = 0; i < out_plane; ++i) p[i] += bv;
            }
    }
    std::vector<Var<T>> parents{x, w};
    if (has_bias) parents.push_back(b);
    return Var<T>::make(std::move(out), parents, [=](Node<T>& nd) {
        auto* gx = parent_grad(nd, 0);
        auto* gw = parent_grad(nd, 1);
        std::vector<T> dcol(static_cast<std::size_t>(kdim) * pix);
        for (int n = 0; n < nb; ++n) {
            const T* dy = nd.grad.data() + static_cast<std::size_t>(n) * cout * out_plane;
            detail::im2col(dy, cout, ho, wo, k, stride, pad, h, wd, dcol.data());
            if (gx)
                detail::gemm(false, false, cin, pix, kdim, nd.parents[1]->value.data(), dcol.data(),
                             gx->data() + static_cast<std::size_t>(n) * cin * pix, true);
            if (gw)
                detail::gemm(false, true, cin, kdim, pix, nd.parents[0]->value.data() + static_cast<std::size_t>(n) * cin * pix,
                             dcol.data(), gw->data(), true);
        }
        if (has_bias) {
            if (auto* gb = parent_grad(nd, 2))
                for (int n = 0; n < nb; ++n)
                    for (int oc = 0; oc < cout; ++oc) {
                        const T* p = nd.grad.data() + (static_cast<std::size_t>(n) * cout + oc) * out_plane;
                        T acc = 0;
                        for (std::size_t i = 0; i < out_plane; ++i) acc += p[i];
                        (*gb)[static_cast<std::size_t>(oc)] += acc;
                    }
        }
    });
}

// ---------------------------------------------------------------------------
// Pooling and resampling
// ---------------------------------------------------------------------------

template <typename T>
Var<T> max_pool2d(const Var<T>& x, int k, int stride, int pad = 0) {
    const int nb = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int ho = conv_out_size(h, k, stride, pad), wo = conv_out_size(w, k, stride, pad);
    require(ho >= 1 && wo >= 1, "max_pool2d: input ", shape_str(x.shape()), " too small");
    Tensor<T> out({nb, c, ho, wo});
    std::vector<std::size_t> arg(out.size());
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int p = 0; p < nb * c; ++p) {
        const T* src = x.value().data() + p * plane;
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                T best = -std::numeric_limits<T>::infinity();
                std::size_t bi = 0;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= w) continue;
                        const std::size_t idx = static_cast<std::size_t>(iy) * w + ix;
                        if (src[idx] > best) {
                            best = src[idx];
                            bi = idx;
                        }
                    }
                }
                const std::size_t o = (static_cast<std::size_t>(p) * ho + oy) * wo + ox;
                out[o] = best;
                arg[o] = p * plane + bi;
            }
    }
    return Var<T>::make(std::move(out), {x}, [arg = std::move(arg)](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            for (std::size_t i = 0; i < arg.size(); ++i) (*g)[arg[i]] += n.grad[i];
    });
}

/// Non-overlapping average pooling with window = stride = k (trailing rows dropped).
template <typename T>
Var<T> avg_pool2d(const Var<T>& x, int k) {
    const int nb = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int ho = h / k, wo = w / k;
    require(ho >= 1 && wo >= 1, "avg_pool2d: input ", shape_str(x.shape()), " smaller than window ", k);
    Tensor<T> out({nb, c, ho, wo});
    const T inv = T(1) / static_cast<T>(k * k);
    for (int p = 0; p < nb * c; ++p)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                T acc = 0;
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) acc += x.value()[(static_cast<std::size_t>(p) * h + oy * k + ky) * w + ox * k + kx];
                out[(static_cast<std::size_t>(p) * ho + oy) * wo + ox] = acc * inv;
            }
    return Var<T>::make(std::move(out), {x}, [=](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            for (int p = 0; p < nb * c; ++p)
                for (int oy = 0; oy < ho; ++oy)
                    for (int ox = 0; ox < wo; ++ox) {
                        const T d = n.grad[(static_cast<std::size_t>(p) * ho + oy) * wo + ox] * inv;
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) (*g)[(static_cast<std::size_t>(p) * h + oy * k + ky) * w + ox * k + kx] += d;
                    }
    });
}

/// [N, C, H, W] -> [N, C] spatial mean.
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
    const int nb = x.dim(0), c = x.dim(1);
    const std::size_t plane = x.size() / static_cast<std::size_t>(nb * c);
    Tensor<T> out({nb, c});
    for (int p = 0; p < nb * c; ++p) {
        T acc = 0;
        for (std::size_t i = 0; i < plane; ++i) acc += x.value()[p * plane + i];
        out[static_cast<std::size_t>(p)] = acc / static_cast<T>(plane);
    }
    return Var<T>::make(std::move(out), {x}, [nb, c, plane](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            for (int p = 0; p < nb * c; ++p) {
                const T d = n.grad[static_cast<std::size_t>(p)] / static_cast<T>(plane);
                for (std::size_t i = 0; i < plane; ++i) (*g)[p * plane + i] += d;
            }
    });
}

template <typename T>
Var<T> upsample_nearest(const Var<T>& x, int factor) {
    const int nb = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int ho = h * factor, wo = w * factor;
    Tensor<T> out({nb, c, ho, wo});
    for (int p = 0; p < nb * c; ++p)
        for (int y = 0; y < ho; ++y)
            for (int xx = 0; xx < wo; ++xx)
                out[(static_cast<std::size_t>(p) * ho + y) * wo + xx] =
                    x.value()[(static_cast<std::size_t>(p) * h + y / factor) * w + xx / factor];
    return Var<T>::make(std::move(out), {x}, [=](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            for (int p = 0; p < nb * c; ++p)
                for (int y = 0; y < ho; ++y)
                    for (int xx = 0; xx < wo; ++xx)
                        (*g)[(static_cast<std::size_t>(p) * h + y / factor) * w + xx / factor] +=
                            n.grad[(static_cast<std::size_t>(p) * ho + y) * wo + xx];
    });
}

/// Parameter-free bilinear resize (half-pixel centres, border clamp).
template <typename T>
Var<T> resize_bilinear(const Var<T>& x, int ho, int wo) {
    require(ho >= 1 && wo >= 1, "resize_bilinear: invalid target ", ho, "x", wo);
    const int nb = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    require(h >= 1 && w >= 1, "resize_bilinear: empty source");
    Tensor<T> out({nb, c, ho, wo});
    const std::size_t in_plane = static_cast<std::size_t>(h) * w, out_plane = static_cast<std::size_t>(ho) * wo;
    for (int p = 0; p < nb * c; ++p)
        resize_plane_bilinear(x.value().data() + p * in_plane, h, w, out.data() + p * out_plane, ho, wo);
    return Var<T>::make(std::move(out), {x}, [=](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            for (int p = 0; p < nb * c; ++p)
                resize_plane_bilinear_adjoint(n.grad.data() + p * out_plane, ho, wo, g->data() + p * in_plane, h, w);
    });
}

// ---------------------------------------------------------------------------
// Normalisation
// ---------------------------------------------------------------------------

/// Standardises each (sample, channel-group) over its channels and spatial
/// positions. groups == C gives per-channel standardisation.
template <typename T>
Var<T> group_norm(const Var<T>& x, int groups, T eps = T(1e-5)) {
    const int nb = x.dim(0), c = x.dim(1);
    require(groups >= 1 && c % groups == 0, "group_norm: ", c, " channels not divisible into ", groups, " groups");
    const std::size_t m = x.size() / static_cast<std::size_t>(nb * groups);
    Tensor<T> out(x.shape());
    std::vector<T> inv_std(static_cast<std::size_t>(nb * groups));
    for (int gi = 0; gi < nb * groups; ++gi) {
        const T* src = x.value().data() + gi * m;
        T mean = 0;
        for (std::size_t i = 0; i < m; ++i) mean += src[i];
        mean /= static_cast<T>(m);
        T var = 0;
        for (std::size_t i = 0; i < m; ++i) var += (src[i] - mean) * (src[i] - mean);
        var /= static_cast<T>(m);
        const T is = T(1) / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(gi)] = is;
        T* dst = out.data() + gi * m;
        for (std::size_t i = 0; i < m; ++i) dst[i] = (src[i] - mean) * is;
    }
    return Var<T>::make(std::move(out), {x}, [nb, groups, m, inv_std = std::move(inv_std)](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            for (int gi = 0; gi < nb * groups; ++gi) {
                const T* y = n.value.data() + gi * m;
                const T* dy = n.grad.data() + gi * m;
                T mdy = 0, mdyy = 0;
                for (std::size_t i = 0; i < m; ++i) {
                    mdy += dy[i];
                    mdyy += dy[i] * y[i];
                }
                mdy /= static_cast<T>(m);
                mdyy /= static_cast<T>(m);
                const T is = inv_std[static_cast<std::size_t>(gi)];
                for (std::size_t i = 0; i < m; ++i) (*g)[gi * m + i] += is * (dy[i] - mdy - y[i] * mdyy);
            }
    });
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void check_finite(const Tensor<T>& t, const char* what) {
    for (std::size_t i = 0; i < t.size(); ++i)
        if (std::isnan(t[i])) throw NumericError(std::string(what) + ": NaN in input at index " + std::to_string(i));
}

}  // namespace detail

template <typename T>
Var<T> sum_all(const Var<T>& x) {
    T acc = 0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x.value()[i];
    return Var<T>::make(Tensor<T>({1}, std::vector<T>{acc}), {x}, [](Node<T>& n) {
        if (auto* g = parent_grad(n, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[0];
    });
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
    return scale(sum_all(x), T(1) / static_cast<T>(x.size()));
}

/// Mean of squared differences.
template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target) {
    require(pred.shape() == target.shape(), "mse_loss: shape mismatch ", shape_str(pred.shape()), " vs ",
            shape_str(target.shape()));
    detail::check_finite(pred.value(), "mse_loss");
    detail::check_finite(target.value(), "mse_loss");
    const std::size_t m = pred.size();
    T acc = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const T d = pred.value()[i] - target.value()[i];
        acc += d * d;
    }
    return Var<T>::make(Tensor<T>({1}, std::vector<T>{acc / static_cast<T>(m)}), {pred, target}, [m](Node<T>& n) {
        const auto& pv = n.parents[0]->value;
        const auto& tv = n.parents[1]->value;
        const T s = T(2) * n.grad[0] / static_cast<T>(m);
        if (auto* g = parent_grad(n, 0))
            for (std::size_t i = 0; i < m; ++i) (*g)[i] += s * (pv[i] - tv[i]);
        if (auto* g = parent_grad(n, 1))
            for (std::size_t i = 0; i < m; ++i) (*g)[i] -= s * (pv[i] - tv[i]);
    });
}

inline constexpr double kProbClamp = 1e-7;

/// Binary cross-entropy -sum[x log p + (1-x) log(1-p)] with p clamped into
/// [1e-7, 1-1e-7]. `mean` switches to the per-element average.
template <typename T>
Var<T> bce_loss(const Var<T>& p, const Var<T>& x, bool mean = false) {
    require(p.shape() == x.shape(), "bce_loss: shape mismatch ", shape_str(p.shape()), " vs ", shape_str(x.shape()));
    detail::check_finite(p.value(), "bce_loss");
    detail::check_finite(x.value(), "bce_loss");
    const T lo = static_cast<T>(kProbClamp), hi = T(1) - static_cast<T>(kProbClamp);
    const std::size_t m = p.size();
    T acc = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const T pc = std::clamp(p.value()[i], lo, hi);
        const T t = x.value()[i];
        acc -= t * std::log(pc) + (T(1) - t) * std::log(T(1) - pc);
    }
    const T norm = mean ? T(1) / static_cast<T>(m) : T(1);
    return Var<T>::make(Tensor<T>({1}, std::vector<T>{acc * norm}), {p, x}, [=](Node<T>& n) {
        const auto& pv = n.parents[0]->value;
        const auto& xv = n.parents[1]->value;
        const T s = n.grad[0] * norm;
        if (auto* g = parent_grad(n, 0))
            for (std::size_t i = 0; i < m; ++i) {
                const T raw = pv[i];
                if (raw < lo || raw > hi) continue;
                (*g)[i] += s * (-xv[i] / raw + (T(1) - xv[i]) / (T(1) - raw));
            }
        if (auto* g = parent_grad(n, 1))
            for (std::size_t i = 0; i < m; ++i) {
                const T pc = std::clamp(pv[i], lo, hi);
                (*g)[i] += s * (-std::log(pc) + std::log(T(1) - pc));
            }
    });
}

/// KL(N(mu, exp(logvar)) || N(0, 1)) summed over all entries.
template <typename T>
Var<T> kl_loss(const Var<T>& mu, const Var<T>& logvar, bool mean = false) {
    require(mu.shape() == logvar.shape(), "kl_loss: shape mismatch");
    const std::size_t m = mu.size();
    T acc = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const T lv = logvar.value()[i], u = mu.value()[i];
        acc += std::exp(lv) + u * u - T(1) - lv;
    }
    const T norm = mean ? T(1) / static_cast<T>(m) : T(1);
    return Var<T>::make(Tensor<T>({1}, std::vector<T>{T(0.5) * acc * norm}), {mu, logvar}, [=](Node<T>& n) {
        const T s = n.grad[0] * norm;
        if (auto* g = parent_grad(n, 0))
            for (std::size_t i = 0; i < m; ++i) (*g)[i] += s * n.parents[0]->value[i];
        if (auto* g = parent_grad(n, 1))
            for (std::size_t i = 0; i < m; ++i) (*g)[i] += s * T(0.5) * (std::exp(n.parents[1]->value[i]) - T(1));
    });
}

}  // namespace rr::nn
