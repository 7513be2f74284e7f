// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "rr/core/image.hpp"

namespace rr {

/// Axis-aligned box in pixel units; covers columns [x, x+w) and rows [y, y+h).
struct Box {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    friend bool operator==(const Box&, const Box&) = default;
};

/// Degradations applied, in this order: Gaussian blur, brightness scale,
/// occlusion (boxes filled with black), additive Gaussian noise. The identity
/// spec is blur 0, no boxes, brightness 1, noise 0.
struct DegradationSpec {
    double blur_sigma = 0.0;
    std::vector<Box> occlusion_boxes;
    double brightness_scale = 1.0;
    double noise_std = 0.0;

    bool is_identity() const {
        return blur_sigma == 0.0 && occlusion_boxes.empty() && brightness_scale == 1.0 && noise_std == 0.0;
    }

    friend bool operator==(const DegradationSpec&, const DegradationSpec&) = default;
};

/// Throws ArgumentError if a field is out of range or a box leaves the image.
void validate(const DegradationSpec& spec, int height, int width);

Image gaussian_blur(const Image& image, double sigma);

/// Applies `spec` to `image`. `seed` drives the noise; output is in [0, 1].
Image degrade(const Image& image, const DegradationSpec& spec, std::uint64_t seed);

}  // namespace rr
