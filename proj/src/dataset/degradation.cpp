// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include "rr/dataset/degradation.hpp"

#include <cmath>

#include "rr/core/rng.hpp"

namespace rr {

void validate(const DegradationSpec& spec, int height, int width) {
    require(std::isfinite(spec.blur_sigma) && spec.blur_sigma >= 0.0, "blur_sigma must be >= 0, got ", spec.blur_sigma);
    require(spec.brightness_scale > 0.0 && spec.brightness_scale <= 1.0, "brightness_scale must be in (0, 1], got ",
            spec.brightness_scale);
    require(std::isfinite(spec.noise_std) && spec.noise_std >= 0.0, "noise_std must be >= 0, got ", spec.noise_std);
    for (const auto& b : spec.occlusion_boxes) {
        require(b.w > 0 && b.h > 0, "occlusion box must have positive size");
        require(b.x >= 0 && b.y >= 0 && b.x + b.w <= width && b.y + b.h <= height, "occlusion box (", b.x, ", ", b.y,
                ", ", b.w, ", ", b.h, ") outside ", width, "x", height, " image");
    }
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * i * i / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (auto& v : k) v /= sum;
    return k;
}

}  // namespace

Image gaussian_blur(const Image& image, double sigma) {
    if (sigma <= 0.0) return image;
    const auto k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    const int h = image.height(), w = image.width();
    Image tmp(h, w), out(h, w);
    // Border pixels are replicated.
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[static_cast<std::size_t>(i + radius)] * image.at(y, std::clamp(x + i, 0, w - 1), c);
                tmp.at(y, x, c) = acc;
            }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[static_cast<std::size_t>(i + radius)] * tmp.at(std::clamp(y + i, 0, h - 1), x, c);
                out.at(y, x, c) = acc;
            }
    return out;
}

Image degrade(const Image& image, const DegradationSpec& spec, std::uint64_t seed) {
    require(!image.empty(), "degrade: empty image");
    validate(spec, image.height(), image.width());
    if (spec.is_identity()) return image;

    Image out = gaussian_blur(image, spec.blur_sigma);
    if (spec.brightness_scale != 1.0)
        for (auto& v : out.data()) v *= spec.brightness_scale;
    for (const auto& b : spec.occlusion_boxes)
        for (int y = b.y; y < b.y + b.h; ++y)
            for (int x = b.x; x < b.x + b.w; ++x)
                for (int c = 0; c < 3; ++c) out.at(y, x, c) = 0.0;
    if (spec.noise_std > 0.0) {
        Rng rng(derive_seed(seed, "degrade/noise"));
        for (auto& v : out.data()) v += spec.noise_std * rng.normal();
    }
    out.clamp01();
    return out;
}

}  // namespace rr
