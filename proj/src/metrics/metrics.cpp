// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include "rr/metrics/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "rr/core/rng.hpp"
#include "rr/nn/ops.hpp"

namespace rr {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
    require(a.height() == b.height() && a.width() == b.width(), what, ": shape mismatch ", a.height(), "x",
            a.width(), " vs ", b.height(), "x", b.width());
    require(!a.empty(), what, ": empty image");
}

}  // namespace

double psnr(const Image& a, const Image& b, double max_val) {
    require_same_shape(a, b, "psnr");
    const auto& x = a.data();
    const auto& y = b.data();
    double acc = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(x.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(max_val * max_val / mse);
}

double ssim(const Image& a, const Image& b, const SsimOptions& opt) {
    require_same_shape(a, b, "ssim");
    const int win = opt.window;
    require(a.height() >= win && a.width() >= win, "ssim: image ", a.height(), "x", a.width(),
            " smaller than the ", win, "x", win, " window");
    const int by = a.height() / win, bx = a.width() / win;
    const double n = static_cast<double>(win) * win;
    double total = 0;
    for (int wy = 0; wy < by; ++wy)
        for (int wx = 0; wx < bx; ++wx) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (int y = wy * win; y < (wy + 1) * win; ++y)
                for (int x = wx * win; x < (wx + 1) * win; ++x) {
                    const double ga = (a.at(y, x, 0) + a.at(y, x, 1) + a.at(y, x, 2)) / 3.0;
                    const double gb = (b.at(y, x, 0) + b.at(y, x, 1) + b.at(y, x, 2)) / 3.0;
                    sa += ga;
                    sb += gb;
                    saa += ga * ga;
                    sbb += gb * gb;
                    sab += ga * gb;
                }
            const double ma = sa / n, mb = sb / n;
            const double va = saa / n - ma * ma, vb = sbb / n - mb * mb, cov = sab / n - ma * mb;
            total += ((2 * ma * mb + opt.c1) * (2 * cov + opt.c2)) /
                     ((ma * ma + mb * mb + opt.c1) * (va + vb + opt.c2));
        }
    return total / (static_cast<double>(by) * bx);
}

PerceptualMetric PerceptualMetric::fixed_random(std::uint64_t seed) {
    PerceptualMetric m;
    Rng rng(derive_seed(seed, "lpips"));
    const int plan[3][3] = {{3, 8, 1}, {8, 16, 2}, {16, 32, 2}};
    for (const auto& p : plan) {
        Layer l;
        l.weight = nn::Tensor<double>({p[1], p[0], 3, 3});
        l.bias = nn::Tensor<double>({p[1]});
        const double bound = std::sqrt(6.0 / (p[0] * 9));
        for (std::size_t i = 0; i < l.weight.size(); ++i) l.weight[i] = rng.uniform(-bound, bound);
        l.stride = p[2];
        m.layers_.push_back(std::move(l));
    }
    return m;
}

PerceptualMetric PerceptualMetric::from_checkpoint(const Checkpoint& ckpt) {
    PerceptualMetric m;
    int in_ch = 3;
    for (int i = 0;; ++i) {
        const std::string base = "lpips/conv" + std::to_string(i);
        if (!ckpt.contains(base + "/weight")) break;
        Layer l;
        l.weight = ckpt.tensor<double>(base + "/weight");
        const auto& s = l.weight.shape();
        if (s.size() != 4 || s[1] != in_ch || s[2] != 3 || s[3] != 3)
            throw FormatError("perceptual weights '" + base + "/weight' must be [Cout, " + std::to_string(in_ch) +
                              ", 3, 3], got " + nn::shape_str(s));
        l.bias = ckpt.contains(base + "/bias") ? ckpt.tensor<double>(base + "/bias") : nn::Tensor<double>({s[0]});
        if (l.bias.shape() != nn::Shape{s[0]}) throw FormatError("perceptual bias '" + base + "/bias' has wrong shape");
        l.stride = i == 0 ? 1 : 2;
        in_ch = s[0];
        m.layers_.push_back(std::move(l));
    }
    if (m.layers_.empty()) throw FormatError("checkpoint holds no lpips/conv0/weight array");
    return m;
}

PerceptualMetric PerceptualMetric::from_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("perceptual weights file not found: " + path.string());
    return from_checkpoint(load_checkpoint(path));
}

namespace {

// Unit-normalises each position's channel vector in place ([1, C, H, W]).
void normalise_channels(nn::Tensor<double>& f) {
    const int c = f.dim(1), hw = f.dim(2) * f.dim(3);
    for (int p = 0; p < hw; ++p) {
        double ss = 0;
        for (int k = 0; k < c; ++k) ss += f[static_cast<std::size_t>(k) * hw + p] * f[static_cast<std::size_t>(k) * hw + p];
        const double inv = 1.0 / (std::sqrt(ss) + 1e-10);
        for (int k = 0; k < c; ++k) f[static_cast<std::size_t>(k) * hw + p] *= inv;
    }
}

}  // namespace

double PerceptualMetric::operator()(const Image& a, const Image& b) const {
    require_same_shape(a, b, "perceptual_distance");
    return 0.5 * (one_sided(a, b) + one_sided(a.flipped_horizontal(), b.flipped_horizontal()));
}

double PerceptualMetric::one_sided(const Image& a, const Image& b) const {
    nn::NoGradGuard guard;
    auto prep = [](const Image& im) { return to_tensor<double>(im).map([](double v) { return 2.0 * v - 1.0; }); };
    nn::Var<double> fa(prep(a)), fb(prep(b));
    double total = 0;
    for (const auto& l : layers_) {
        const nn::Var<double> w(l.weight), bias(l.bias);
        fa = nn::relu(nn::conv2d(fa, w, bias, l.stride, 1));
        fb = nn::relu(nn::conv2d(fb, w, bias, l.stride, 1));
        nn::Tensor<double> na = fa.value(), nb = fb.value();
        normalise_channels(na);
        normalise_channels(nb);
        const int hw = na.dim(2) * na.dim(3);
        double acc = 0;
        for (std::size_t i = 0; i < na.size(); ++i) {
            const double d = na[i] - nb[i];
            acc += d * d;
        }
        total += acc / hw;
    }
    return total;
}

double perceptual_distance(const Image& a, const Image& b) {
    static const PerceptualMetric metric = PerceptualMetric::fixed_random();
    return metric(a, b);
}

MetricsRow score_pair(const std::string& id, const Image& restored, const Image& reference,
                      const PerceptualMetric& lpips) {
    return {id, psnr(restored, reference), ssim(restored, reference), lpips(restored, reference)};
}

std::string format_metric(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "id,psnr,ssim,lpips\n";
    for (const auto& r : rows)
        out << r.id << ',' << format_metric(r.psnr) << ',' << format_metric(r.ssim) << ',' << format_metric(r.lpips)
            << '\n';
}

}  // namespace rr
