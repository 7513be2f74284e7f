// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include "rr/readability/preprocess.hpp"

#include <vector>

#include "rr/core/bilinear.hpp"

namespace rr {

Image resize_bilinear(const Image& image, int height, int width) {
    require(!image.empty(), "resize: empty image");
    require(height >= 1 && width >= 1, "resize: invalid target ", height, "x", width);
    if (image.height() == height && image.width() == width) return image;
    const int h = image.height(), w = image.width();
    std::vector<double> plane(static_cast<std::size_t>(h) * w), out_plane(static_cast<std::size_t>(height) * width);
    Image out(height, width);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) plane[static_cast<std::size_t>(y) * w + x] = image.at(y, x, c);
        resize_plane_bilinear(plane.data(), h, w, out_plane.data(), height, width);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) out.at(y, x, c) = out_plane[static_cast<std::size_t>(y) * width + x];
    }
    return out;
}

Image preprocess(const Image& image, int target) {
    require(!image.empty(), "preprocess: empty image");
    require(target >= 1, "preprocess: invalid target size ", target);
    Image out = resize_bilinear(image, target, target);
    out.clamp01();
    return out;
}

Image augment(const Image& image, Rng& rng, const AugmentConfig& config) {
    const bool flip = rng.bernoulli(config.flip_prob);
    const double brightness = rng.uniform() * (config.brightness_hi - config.brightness_lo) + config.brightness_lo;
    const double contrast = rng.uniform() * (config.contrast_hi - config.contrast_lo) + config.contrast_lo;
    Image out = flip ? image.flipped_horizontal() : image;
    if (brightness != 1.0)
        for (auto& v : out.data()) v *= brightness;
    if (contrast != 1.0) {
        const double m = out.mean();
        for (auto& v : out.data()) v = (v - m) * contrast + m;
    }
    out.clamp01();
    return out;
}

}  // namespace rr
