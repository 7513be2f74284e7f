// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rr/dataset/synthetic.hpp"
#include "rr/pipeline/config.hpp"

namespace rr {

struct CompareRow {
    std::string name;
    double psnr = 0, ssim = 0, lpips = 0;
    /// Published psnr, ssim, lpips for this variant, when there is one.
    std::optional<std::array<double, 3>> reference;
};

struct CompareTable {
    std::string column;  // first CSV column: backbone, extractor or fusion
    std::vector<CompareRow> rows;
    CompareRow baseline;  // degraded input vs clean over the same images
    std::vector<std::string> eval_ids;
};

/// Restorer settings every comparison row starts from: the experiment's
/// restorer config shrunk to the compare section's sizes.
RestorerConfig compare_restorer_config(const ExperimentConfig& config);

/// Toy corpus of the compare section, generated from the experiment seed.
std::vector<FundusSample> compare_corpus(const ExperimentConfig& config);

/// Test-split images (split from the experiment seed) whose target labels are
/// not all readable, at most compare.max_eval of them.
std::vector<int> compare_eval_indices(const ExperimentConfig& config, const std::vector<FundusSample>& corpus);

using RowCallback = std::function<void(const CompareRow&)>;

/// Each harness trains one restorer per variant on the train split with
/// everything else held fixed, restores the evaluation images without
/// screening, and averages the metrics against the clean images.
CompareTable compare_backbones(const ExperimentConfig& config, const std::vector<FundusSample>& corpus,
                               const RowCallback& on_row = {});
CompareTable compare_extractors(const ExperimentConfig& config, const std::vector<FundusSample>& corpus,
                                const RowCallback& on_row = {});
/// Rows carry the published numbers as reference columns; they are not
/// expected to match at toy scale.
CompareTable compare_fusion(const ExperimentConfig& config, const std::vector<FundusSample>& corpus,
                            const RowCallback& on_row = {});

/// `<column>,psnr,ssim,lpips`, plus reference_psnr,reference_ssim,
/// reference_lpips when any row has a reference (empty cells otherwise).
void write_compare_csv(const std::filesystem::path& path, const CompareTable& table);
nlohmann::json to_json(const CompareTable& table);

}  // namespace rr
