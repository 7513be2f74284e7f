// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rr/core/image.hpp"
#include "rr/dataset/degradation.hpp"
#include "rr/readability/labels.hpp"

namespace rr {

/// Geometry of the landmarks drawn into a clean image, in pixels.
struct Anatomy {
    double fundus_cx = 0, fundus_cy = 0, fundus_radius = 0;
    double disc_cx = 0, disc_cy = 0, disc_rx = 0, disc_ry = 0;
    double macula_cx = 0, macula_cy = 0, macula_radius = 0;

    friend bool operator==(const Anatomy&, const Anatomy&) = default;
};

/// Degradation levels at which each region stops being readable.
struct LabelThresholds {
    double sigma_optic_disc = 1.0;
    double sigma_macula = 1.8;
    double sigma_retina = 2.6;
    double sigma_valid = 4.5;
    double min_brightness_valid = 0.35;
    double min_brightness_readable = 0.5;
    double max_noise_retina = 0.12;
    double max_noise_valid = 0.25;
};

enum class OcclusionTarget { none, optic_disc, macula };

/// A sampling recipe for degraded images. Ranges are uniform [lo, hi].
struct DegradationCategory {
    std::string name;
    double weight = 1.0;
    double blur_lo = 0, blur_hi = 0;
    double noise_lo = 0, noise_hi = 0;
    double brightness_lo = 1, brightness_hi = 1;
    OcclusionTarget occlusion = OcclusionTarget::none;
};

struct GeneratorConfig {
    double degraded_fraction = 0.6;
    std::vector<DegradationCategory> categories = default_categories();
    LabelThresholds thresholds{};

    static std::vector<DegradationCategory> default_categories();
    /// Blur-only categories with margins around every threshold.
    static std::vector<DegradationCategory> separable_blur_categories();
};

struct FundusSample {
    std::string id;
    Image clean;
    Image image;  // observed (degraded) image
    ReadabilityLabels labels;
    DegradationSpec degradation;
    Anatomy anatomy;
};

bool box_overlaps_ellipse(const Box& box, double cx, double cy, double rx, double ry);

/// Readability labels implied by a degradation applied to an image with the
/// given anatomy:
///   valid      = blur <= sigma_valid, brightness >= min_brightness_valid, noise <= max_noise_valid
///   optic_disc = blur <= sigma_optic_disc and no box touches the disc ellipse
///   macula     = valid, blur <= sigma_macula, brightness >= min_brightness_readable,
///                no box touches the macula disc
///   retina     = valid, blur <= sigma_retina, brightness >= min_brightness_readable,
///                noise <= max_noise_retina
ReadabilityLabels derive_labels(const DegradationSpec& spec, const Anatomy& anatomy, const LabelThresholds& th);

/// Draws one clean fundus-like image: a vignetted circular fundus with
/// choroidal texture, a bright optic-disc ellipse, a darker macula and
/// vessel curves leaving the disc.
Image draw_clean_fundus(int size, std::uint64_t seed, Anatomy* anatomy_out = nullptr);

std::vector<FundusSample> generate_synthetic_fundus(std::uint64_t seed, int count, int size,
                                                    const GeneratorConfig& config = {});

}  // namespace rr
