// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include "rr/readability/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>

namespace rr {

using nlohmann::json;

std::vector<double> curve_thresholds(const std::vector<double>& scores) {
    std::vector<double> t(scores);
    for (int k = 0; k < 256; ++k) t.push_back(k / 255.0);
    std::sort(t.begin(), t.end(), std::greater<>());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    t.insert(t.begin(), std::numeric_limits<double>::infinity());
    return t;
}

namespace {

struct Counts {
    long tp, fp, pos, neg;
};

// Counts at every threshold in one sweep over descending scores.
std::vector<Counts> sweep(const std::vector<double>& scores, const std::vector<bool>& truth,
                          const std::vector<double>& thresholds) {
    require(scores.size() == truth.size(), "score/label count mismatch");
    std::vector<std::size_t> idx(scores.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    long pos = 0;
    for (bool b : truth) pos += b ? 1 : 0;
    const long neg = static_cast<long>(truth.size()) - pos;
    std::vector<Counts> out;
    out.reserve(thresholds.size());
    long tp = 0, fp = 0;
    std::size_t j = 0;
    for (double th : thresholds) {
        while (j < idx.size() && scores[idx[j]] >= th) {
            (truth[idx[j]] ? tp : fp) += 1;
            ++j;
        }
        out.push_back({tp, fp, pos, neg});
    }
    return out;
}

double safe_div(double a, double b) { return b > 0 ? a / b : 0.0; }

}  // namespace

std::vector<CurvePoint> roc_curve(const std::vector<double>& scores, const std::vector<bool>& truth) {
    const auto th = curve_thresholds(scores);
    const auto counts = sweep(scores, truth, th);
    std::vector<CurvePoint> out;
    for (std::size_t i = 0; i < th.size(); ++i) {
        const auto& c = counts[i];
        out.push_back({th[i], safe_div(c.fp, c.neg), safe_div(c.tp, c.pos)});
    }
    return out;
}

std::vector<CurvePoint> pr_curve(const std::vector<double>& scores, const std::vector<bool>& truth) {
    const auto th = curve_thresholds(scores);
    const auto counts = sweep(scores, truth, th);
    std::vector<CurvePoint> out;
    for (std::size_t i = 0; i < th.size(); ++i) {
        const auto& c = counts[i];
        if (c.tp + c.fp == 0) continue;  // precision undefined
        out.push_back({th[i], safe_div(c.tp, c.pos), static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)});
    }
    return out;
}

std::optional<double> roc_auc(const std::vector<double>& scores, const std::vector<bool>& truth) {
    long pos = 0;
    for (bool b : truth) pos += b ? 1 : 0;
    if (pos == 0 || pos == static_cast<long>(truth.size())) return std::nullopt;
    const auto roc = roc_curve(scores, truth);
    double area = 0;
    for (std::size_t i = 1; i < roc.size(); ++i) area += (roc[i].x - roc[i - 1].x) * (roc[i].y + roc[i - 1].y) * 0.5;
    return area;
}

LabelReport evaluate_label(const std::string& name, const std::vector<double>& scores, const std::vector<bool>& truth) {
    require(!scores.empty(), "evaluate: empty test set");
    require(scores.size() == truth.size(), "evaluate: score/label count mismatch");
    LabelReport r;
    r.label = name;
    auto& c = r.confusion;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= 0.5;
        if (pred && truth[i]) ++c.tp;
        else if (pred) ++c.fp;
        else if (truth[i]) ++c.fn;
        else ++c.tn;
    }
    r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    r.precision = safe_div(c.tp, c.tp + c.fp);
    r.recall = safe_div(c.tp, c.tp + c.fn);
    r.f1 = safe_div(2.0 * r.precision * r.recall, r.precision + r.recall);
    r.roc = roc_curve(scores, truth);
    r.pr = pr_curve(scores, truth);
    r.auc = roc_auc(scores, truth);
    if (!r.auc) r.warnings.push_back("single-class label in test set: AUC undefined");
    if (c.tp + c.fp == 0) r.warnings.push_back("no positive predictions: precision reported as 0");
    return r;
}

ReadabilityReport evaluate_scores(const std::vector<std::array<double, kNumLabels>>& scores,
                                  const std::vector<ReadabilityLabels>& truth) {
    require(!scores.empty(), "evaluate: empty test set");
    require(scores.size() == truth.size(), "evaluate: score/label count mismatch");
    ReadabilityReport rep;
    rep.n = static_cast<long>(scores.size());
    for (int k = 0; k < kNumLabels; ++k) {
        std::vector<double> s;
        std::vector<bool> t;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            s.push_back(scores[i][static_cast<std::size_t>(k)]);
            t.push_back(truth[i].get(k));
        }
        rep.labels[static_cast<std::size_t>(k)] = evaluate_label(std::string(kLabelNames[static_cast<std::size_t>(k)]), s, t);
    }
    return rep;
}

ReadabilityReport evaluate_readability(const ReadabilityClassifier& model, const std::vector<Image>& images,
                                       const std::vector<ReadabilityLabels>& truth) {
    require(!images.empty(), "evaluate: empty test set");
    return evaluate_scores(predict_proba(model, images), truth);
}

json to_json(const ReadabilityReport& report) {
    json labels = json::object();
    for (const auto& r : report.labels) {
        labels[r.label] = {
            {"accuracy", r.accuracy},
            {"precision", r.precision},
            {"recall", r.recall},
            {"f1", r.f1},
            {"auc", r.auc ? json(*r.auc) : json(nullptr)},
            {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}},
            {"warnings", r.warnings},
        };
    }
    return {{"n", report.n}, {"threshold", 0.5}, {"labels", labels}};
}

namespace {

void write_curve(const std::filesystem::path& path, const char* header, const std::vector<CurvePoint>& pts) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << header << '\n';
    char buf[96];
    for (const auto& p : pts) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f", p.threshold, p.x, p.y);
        out << buf << '\n';
    }
}

}  // namespace

void write_report(const std::filesystem::path& dir, const ReadabilityReport& report) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "readability_report.json");
        if (!out) throw IoError("cannot write " + (dir / "readability_report.json").string());
        out << to_json(report).dump(2) << '\n';
    }
    for (const auto& r : report.labels) {
        write_curve(dir / ("roc_" + r.label + ".csv"), "threshold,fpr,tpr", r.roc);
        write_curve(dir / ("pr_" + r.label + ".csv"), "threshold,recall,precision", r.pr);
    }
}

}  // namespace rr
