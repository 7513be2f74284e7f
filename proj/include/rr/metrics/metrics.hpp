// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rr/core/checkpoint.hpp"
#include "rr/core/image.hpp"

namespace rr {

/// 10 log10(max_val^2 / MSE) over all pixels and channels; +inf when the
/// images are identical.
double psnr(const Image& a, const Image& b, double max_val = 1.0);

struct SsimOptions {
    int window = 8;
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;
};

/// Mean SSIM over non-overlapping window x window blocks of the channel-mean
/// grayscale images. Uses population (1/n) statistics; pixels beyond the last
/// whole block are ignored.
double ssim(const Image& a, const Image& b, const SsimOptions& opt = {});

/// LPIPS-style distance: a stack of 3x3 conv + ReLU layers, per-position unit
/// normalisation over channels, squared differences summed over channels,
/// averaged over positions and summed over layers. Inputs are mapped to
/// [-1, 1] first. The result is averaged with the same distance on the
/// horizontally mirrored pair, which makes it invariant to flipping both
/// images (random filters and strided sampling are not mirror-symmetric).
///
/// The default backend draws the filters from a fixed seed; they are not
/// calibrated to human judgements. External weights can be supplied as a
/// checkpoint with arrays `lpips/conv{i}/weight` ([Cout, Cin, 3, 3]) and
/// optional `lpips/conv{i}/bias`.
class PerceptualMetric {
public:
    struct Layer {
        nn::Tensor<double> weight;  // [Cout, Cin, 3, 3]
        nn::Tensor<double> bias;    // [Cout]
        int stride = 1;
    };

    static constexpr std::uint64_t kDefaultSeed = 0x1b9f5e2dULL;

    static PerceptualMetric fixed_random(std::uint64_t seed = kDefaultSeed);
    static PerceptualMetric from_checkpoint(const Checkpoint& ckpt);
    static PerceptualMetric from_file(const std::filesystem::path& path);

    double operator()(const Image& a, const Image& b) const;

    const std::vector<Layer>& layers() const { return layers_; }

private:
    double one_sided(const Image& a, const Image& b) const;

    std::vector<Layer> layers_;
};

/// Distance under the default fixed-random backend.
double perceptual_distance(const Image& a, const Image& b);

struct MetricsRow {
    std::string id;
    double psnr = 0;
    double ssim = 0;
    double lpips = 0;
};

MetricsRow score_pair(const std::string& id, const Image& restored, const Image& reference,
                      const PerceptualMetric& lpips);

/// Fixed-point with six decimals; infinities print as "inf" / "-inf".
std::string format_metric(double v);

/// Writes `id,psnr,ssim,lpips`.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

}  // namespace rr
