// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include "rr/dataset/split.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rr/core/rng.hpp"

namespace rr {

std::array<int, 3> split_sizes(int n, const SplitRatios& ratios) {
    require(n >= 0, "split: negative sample count");
    const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
    for (double v : r) require(v > 0.0, "split ratios must be positive");
    require(std::abs(r[0] + r[1] + r[2] - 1.0) <= 1e-9, "split ratios must sum to 1, got ", r[0] + r[1] + r[2]);

    std::array<int, 3> sizes{};
    std::array<double, 3> frac{};
    int used = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double exact = r[i] * n;
        // Guard against products like 0.16 * 100 = 15.999999999999998.
        sizes[i] = static_cast<int>(std::floor(exact + 1e-9));
        frac[i] = exact - sizes[i];
        used += sizes[i];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (int k = 0; used < n; ++k, ++used) ++sizes[order[static_cast<std::size_t>(k % 3)]];
    return sizes;
}

DatasetSplit split_dataset(int n, const SplitRatios& ratios, std::uint64_t seed) {
    const auto sizes = split_sizes(n, ratios);
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, "split"));
    for (int i = n - 1; i > 0; --i) std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(rng.uniform_int(0, i))]);
    DatasetSplit s;
    auto it = idx.begin();
    s.train.assign(it, it + sizes[0]);
    it += sizes[0];
    s.val.assign(it, it + sizes[1]);
    it += sizes[1];
    s.test.assign(it, idx.end());
    return s;
}

ClassWeights compute_class_weights(const std::vector<ReadabilityLabels>& labels) {
    ClassWeights cw;
    const double n = static_cast<double>(labels.size());
    for (int k = 0; k < kNumLabels; ++k) {
        double pos = 0;
        for (const auto& l : labels) pos += l.get(k) ? 1.0 : 0.0;
        const double neg = n - pos;
        auto& w = cw.weights[static_cast<std::size_t>(k)];
        if (pos == 0.0 || neg == 0.0) {
            w = {1.0, 1.0};
            cw.degenerate[static_cast<std::size_t>(k)] = true;
        } else {
            w = {n / (2.0 * pos), n / (2.0 * neg)};
        }
    }
    return cw;
}

}  // namespace rr
