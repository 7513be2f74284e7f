// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rr/readability/classifier.hpp"

namespace rr {

struct Confusion {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    long total() const { return tp + fp + tn + fn; }
};

struct CurvePoint {
    double threshold;
    double x;  // fpr for ROC, recall for PR
    double y;  // tpr for ROC, precision for PR
};

/// Per-label binary evaluation at the fixed 0.5 decision threshold.
struct LabelReport {
    std::string label;
    Confusion confusion;
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
    std::optional<double> auc;  // empty when the label has a single class
    std::vector<CurvePoint> roc;
    std::vector<CurvePoint> pr;
    std::vector<std::string> warnings;
};

struct ReadabilityReport {
    long n = 0;
    std::array<LabelReport, kNumLabels> labels;
};

/// Thresholds used for curves: 256 evenly spaced values in [0, 1] plus every
/// distinct score, sorted descending and preceded by +inf.
std::vector<double> curve_thresholds(const std::vector<double>& scores);

/// ROC points (fpr, tpr) over curve_thresholds(), ordered by descending
/// threshold, so both coordinates are non-decreasing.
std::vector<CurvePoint> roc_curve(const std::vector<double>& scores, const std::vector<bool>& truth);
std::vector<CurvePoint> pr_curve(const std::vector<double>& scores, const std::vector<bool>& truth);

/// Trapezoidal area under the ROC curve; empty if only one class is present.
std::optional<double> roc_auc(const std::vector<double>& scores, const std::vector<bool>& truth);

/// Evaluates one label given scores and ground truth.
LabelReport evaluate_label(const std::string& name, const std::vector<double>& scores, const std::vector<bool>& truth);

ReadabilityReport evaluate_scores(const std::vector<std::array<double, kNumLabels>>& scores,
                                  const std::vector<ReadabilityLabels>& truth);

ReadabilityReport evaluate_readability(const ReadabilityClassifier& model, const std::vector<Image>& images,
                                       const std::vector<ReadabilityLabels>& truth);

nlohmann::json to_json(const ReadabilityReport& report);

/// Writes readability_report.json, roc_<label>.csv and pr_<label>.csv.
void write_report(const std::filesystem::path& dir, const ReadabilityReport& report);

}  // namespace rr
