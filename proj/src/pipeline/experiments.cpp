// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include "rr/pipeline/experiments.hpp"

#include <algorithm>
#include <fstream>

#include "rr/core/rng.hpp"
#include "rr/dataset/split.hpp"
#include "rr/metrics/metrics.hpp"
#include "rr/pipeline/restorer.hpp"

namespace rr {

namespace {

struct Setup {
    std::vector<int> train;
    std::vector<int> eval;
};

Setup make_setup(const ExperimentConfig& config, const std::vector<FundusSample>& corpus) {
    require<PipelineError>(!corpus.empty(), "comparison: empty corpus");
    const DatasetSplit split = split_dataset(static_cast<int>(corpus.size()), config.data.split, config.seed);
    require<PipelineError>(!split.train.empty(), "comparison: empty training split");
    return {split.train, compare_eval_indices(config, corpus)};
}

CompareRow evaluate_row(const std::string& name, const Restorer& restorer, const std::vector<FundusSample>& corpus,
                        const std::vector<int>& eval, std::uint64_t seed, const PerceptualMetric& lpips) {
    CompareRow row;
    row.name = name;
    for (int i : eval) {
        const auto& s = corpus[static_cast<std::size_t>(i)];
        const Image restored = restorer.restore_image(s.image, derive_seed(seed, s.id));
        const MetricsRow m = score_pair(s.id, restored, s.clean, lpips);
        row.psnr += std::min(m.psnr, kPsnrCap);
        row.ssim += m.ssim;
        row.lpips += m.lpips;
    }
    const double n = static_cast<double>(eval.size());
    row.psnr /= n;
    row.ssim /= n;
    row.lpips /= n;
    return row;
}

CompareRow baseline_row(const std::vector<FundusSample>& corpus, const std::vector<int>& eval,
                        const PerceptualMetric& lpips) {
    CompareRow row;
    row.name = "degraded";
    for (int i : eval) {
        const auto& s = corpus[static_cast<std::size_t>(i)];
        const MetricsRow m = score_pair(s.id, s.image, s.clean, lpips);
        row.psnr += std::min(m.psnr, kPsnrCap);
        row.ssim += m.ssim;
        row.lpips += m.lpips;
    }
    const double n = static_cast<double>(eval.size());
    row.psnr /= n;
    row.ssim /= n;
    row.lpips /= n;
    return row;
}

template <typename Variant, typename Apply, typename Name>
CompareTable run(const std::string& column, const ExperimentConfig& config, const std::vector<FundusSample>& corpus,
                 const std::vector<Variant>& variants, Apply apply, Name name, const RowCallback& on_row) {
    const Setup setup = make_setup(config, corpus);
    const PerceptualMetric lpips = PerceptualMetric::fixed_random();
    CompareTable table;
    table.column = column;
    for (int i : setup.eval) table.eval_ids.push_back(corpus[static_cast<std::size_t>(i)].id);
    table.baseline = baseline_row(corpus, setup.eval, lpips);
    for (const Variant& v : variants) {
        RestorerConfig rc = compare_restorer_config(config);
        apply(rc, v);
        const RestorerTraining trained = train_restorer(rc, corpus, setup.train);
        table.rows.push_back(evaluate_row(name(v), *trained.model, corpus, setup.eval,
                                          derive_seed(config.seed, "compare/restore"), lpips));
        if (on_row) on_row(table.rows.back());
    }
    return table;
}

}  // namespace

RestorerConfig compare_restorer_config(const ExperimentConfig& config) {
    const CompareConfig& k = config.compare;
    RestorerConfig rc = config.restorer;
    rc.image_size = k.image_size;
    rc.width = k.width;
    rc.vae_channels = {k.width, 2 * k.width, 4 * k.width};
    rc.latent_dim = 4 * k.width;
    rc.optimizer.epochs = k.epochs;
    rc.extractor.width = k.extractor_width;
    rc.extractor.input_size = k.image_size;
    rc.extractor.attention.embed_dim = k.embed_dim;
    rc.extractor.attention.heads = k.heads;
    rc.seed = config.seed;
    return rc;
}

std::vector<FundusSample> compare_corpus(const ExperimentConfig& config) {
    return generate_synthetic_fundus(derive_seed(config.seed, "compare/data"), config.compare.count,
                                     config.compare.image_size, config.data.generator_config());
}

std::vector<int> compare_eval_indices(const ExperimentConfig& config, const std::vector<FundusSample>& corpus) {
    const DatasetSplit split = split_dataset(static_cast<int>(corpus.size()), config.data.split, config.seed);
    std::vector<int> eval;
    for (int i : split.test) {
        const auto& labels = corpus[static_cast<std::size_t>(i)].labels;
        const auto& targets = config.restorer.restore.target_labels;
        if (std::any_of(targets.begin(), targets.end(), [&](Label l) { return !labels.get(l); })) eval.push_back(i);
        if (static_cast<int>(eval.size()) == config.compare.max_eval) break;
    }
    require<PipelineError>(!eval.empty(), "comparison: no test image has an unreadable target region");
    return eval;
}

CompareTable compare_backbones(const ExperimentConfig& config, const std::vector<FundusSample>& corpus,
                               const RowCallback& on_row) {
    const std::vector<Backbone> all{Backbone::unet, Backbone::unet_pp, Backbone::resnet_unet, Backbone::densenet_unet,
                                    Backbone::vae};
    return run(
        "backbone", config, corpus, all, [](RestorerConfig& rc, Backbone b) { rc.backbone = b; },
        [](Backbone b) { return to_string(b); }, on_row);
}

CompareTable compare_extractors(const ExperimentConfig& config, const std::vector<FundusSample>& corpus,
                                const RowCallback& on_row) {
    const std::vector<ExtractorKind> all(kAllExtractors.begin(), kAllExtractors.end());
    return run(
        "extractor", config, corpus, all, [](RestorerConfig& rc, ExtractorKind k) { rc.extractor.kind = k; },
        [](ExtractorKind k) { return to_string(k); }, on_row);
}

CompareTable compare_fusion(const ExperimentConfig& config, const std::vector<FundusSample>& corpus,
                            const RowCallback& on_row) {
    const auto keys = FusionStrategy::all();
    const std::vector<FusionStrategy> all(keys.begin(), keys.end());
    CompareTable t = run(
        "fusion", config, corpus, all, [](RestorerConfig& rc, const FusionStrategy& s) { rc.fusion = s; },
        [](const FusionStrategy& s) { return s.key(); }, on_row);
    // Published full-scale numbers; bilinear_static is the headline result.
    for (auto& row : t.rows) {
        if (row.name == "upsample_static") row.reference = {11.99, 0.350, 0.546};
        if (row.name == "upsample_dynamic") row.reference = {12.21, 0.681, 0.329};
        if (row.name == "bilinear_static") row.reference = {27.4521, 0.9556, 0.1911};
        if (row.name == "bilinear_dynamic") row.reference = {15.26, 0.713, 0.271};
    }
    return t;
}

void write_compare_csv(const std::filesystem::path& path, const CompareTable& table) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    const bool refs = std::any_of(table.rows.begin(), table.rows.end(), [](const CompareRow& r) { return r.reference; });
    out << table.column << ",psnr,ssim,lpips";
    if (refs) out << ",reference_psnr,reference_ssim,reference_lpips";
    out << '\n';
    for (const auto& r : table.rows) {
        out << r.name << ',' << format_metric(r.psnr) << ',' << format_metric(r.ssim) << ',' << format_metric(r.lpips);
        if (refs) {
            if (r.reference)
                for (double v : *r.reference) out << ',' << format_metric(v);
            else
                out << ",,,";
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

nlohmann::json to_json(const CompareTable& table) {
    auto row = [](const CompareRow& r) {
        nlohmann::json j = {{"name", r.name}, {"psnr", r.psnr}, {"ssim", r.ssim}, {"lpips", r.lpips}};
        if (r.reference) j["reference"] = {{"psnr", (*r.reference)[0]}, {"ssim", (*r.reference)[1]}, {"lpips", (*r.reference)[2]}};
        return j;
    };
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table.rows) rows.push_back(row(r));
    return {{"column", table.column}, {"rows", rows}, {"baseline", row(table.baseline)}, {"eval_ids", table.eval_ids}};
}

}  // namespace rr
