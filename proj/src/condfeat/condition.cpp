// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstring>

#include "rr/condfeat/extractor.hpp"

namespace rr {

ConditionalFeature pool_condition(std::vector<nn::Tensor<float>> maps) {
    if (maps.empty()) throw ArgumentError("pool_condition: no source maps");
    const nn::Shape shape = maps[0].shape();
    for (const auto& m : maps) require(m.shape() == shape, "pool_condition: mixed map shapes");
    const std::size_t n = maps[0].size();
    std::sort(maps.begin(), maps.end(), [n](const nn::Tensor<float>& a, const nn::Tensor<float>& b) {
        return std::memcmp(a.data(), b.data(), n * sizeof(float)) < 0;
    });
    std::vector<double> acc(n, 0.0);
    for (const auto& m : maps)
        for (std::size_t i = 0; i < n; ++i) acc[i] += m[i];
    ConditionalFeature out;
    out.map = nn::Tensor<float>(shape);
    for (std::size_t i = 0; i < n; ++i) out.map[i] = static_cast<float>(acc[i] / static_cast<double>(maps.size()));
    out.n_sources = static_cast<int>(maps.size());
    return out;
}

}  // namespace rr
