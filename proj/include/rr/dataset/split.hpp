// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "rr/readability/labels.hpp"

namespace rr {

struct DatasetSplit {
    std::vector<int> train;
    std::vector<int> val;
    std::vector<int> test;
};

struct SplitRatios {
    double train = 0.64;
    double val = 0.16;
    double test = 0.20;
};

/// Largest-remainder allocation of `n` items; ties go train, then val, then test.
std::array<int, 3> split_sizes(int n, const SplitRatios& ratios);

/// Seeded shuffle of [0, n) partitioned by split_sizes.
DatasetSplit split_dataset(int n, const SplitRatios& ratios, std::uint64_t seed);

struct LabelWeight {
    double pos = 1.0;
    double neg = 1.0;
};

struct ClassWeights {
    std::array<LabelWeight, kNumLabels> weights{};
    /// Set for labels that had no positives or no negatives (weights left at 1).
    std::array<bool, kNumLabels> degenerate{};
};

/// Balanced weights w_pos = N / (2 N_pos), w_neg = N / (2 N_neg) per label.
ClassWeights compute_class_weights(const std::vector<ReadabilityLabels>& labels);

}  // namespace rr
