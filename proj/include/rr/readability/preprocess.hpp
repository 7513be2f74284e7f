// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rr/core/image.hpp"
#include "rr/core/rng.hpp"

namespace rr {

/// Bilinear resize to target x target followed by a clamp into [0, 1].
Image preprocess(const Image& image, int target);

/// Bilinear resize of an image to an arbitrary size (no clamp).
Image resize_bilinear(const Image& image, int height, int width);

struct AugmentConfig {
    double flip_prob = 0.5;
    double brightness_lo = 0.9, brightness_hi = 1.1;
    double contrast_lo = 0.9, contrast_hi = 1.1;

    static AugmentConfig identity() { return {0.0, 1.0, 1.0, 1.0, 1.0}; }
};

/// Random horizontal flip, brightness scaling and contrast scaling about the
/// image mean, then a clamp into [0, 1]. Always consumes three draws from `rng`.
Image augment(const Image& image, Rng& rng, const AugmentConfig& config = {});

}  // namespace rr
