// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

// rr_cli: data generation, training, restoration and the comparison runs.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 anything else.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rr/core/checkpoint.hpp"
#include "rr/dataset/io.hpp"
#include "rr/dataset/split.hpp"
#include "rr/pipeline/config.hpp"
#include "rr/pipeline/experiments.hpp"
#include "rr/pipeline/restorer.hpp"
#include "rr/readability/report.hpp"

namespace fs = std::filesystem;
using namespace rr;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
};

class Clock {
public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

ExperimentConfig load_config(const Common& c) {
    ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment_config(c.config);
    if (c.seed) {
        cfg.seed = *c.seed;
        cfg.restorer.seed = *c.seed;
    }
    cfg.validate();
    return cfg;
}

fs::path out_dir(const Common& c) {
    fs::create_directories(c.out);
    return c.out;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f << j.dump(2) << '\n';
}

// The corpus in `data` when given, else the one the config generates.
std::vector<FundusSample> corpus_for(const ExperimentConfig& cfg, const std::string& data) {
    if (!data.empty()) return read_corpus(data);
    return generate_synthetic_fundus(cfg.seed, cfg.data.count, cfg.data.image_size, cfg.data.generator_config());
}

DatasetSplit split_for(const ExperimentConfig& cfg, const std::vector<FundusSample>& corpus) {
    return split_dataset(static_cast<int>(corpus.size()), cfg.data.split, cfg.seed);
}

std::vector<int> select(const DatasetSplit& s, const std::string& which, int n) {
    if (which == "train") return s.train;
    if (which == "val") return s.val;
    if (which == "test") return s.test;
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
}

void log(const char* fmt, auto... args) {
    std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
}

// ---------------------------------------------------------------------------

void gen_data(const Common& c) {
    const ExperimentConfig cfg = load_config(c);
    const fs::path out = out_dir(c);
    const auto corpus = corpus_for(cfg, "");
    write_corpus(out, corpus);
    const DatasetSplit s = split_for(cfg, corpus);
    write_json(out / "split.json", {{"train", s.train}, {"val", s.val}, {"test", s.test}});
    write_json(out / "config.json", to_json(cfg));
    log("wrote %zu images to %s", corpus.size(), out.string().c_str());
}

void train_readability_cmd(const Common& c, const std::string& data) {
    const ExperimentConfig cfg = load_config(c);
    const fs::path out = out_dir(c);
    const auto corpus = corpus_for(cfg, data);
    const DatasetSplit s = split_for(cfg, corpus);
    Clock clock;
    const ReadabilityTraining tr = train_readability(cfg.readability, corpus, s.train, s.val, cfg.seed);
    save_checkpoint(out / "readability.rrgn", to_checkpoint(tr.model));

    std::ofstream hist(out / "readability_history.csv");
    hist << "epoch,train_loss,val_loss\n";
    for (const auto& e : tr.history) hist << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';

    const std::vector<int>& eval = s.test.empty() ? s.val : s.test;
    std::vector<Image> images;
    std::vector<ReadabilityLabels> truth;
    for (int i : eval) {
        images.push_back(corpus[static_cast<std::size_t>(i)].image);
        truth.push_back(corpus[static_cast<std::size_t>(i)].labels);
    }
    if (!images.empty()) {
        const ReadabilityReport rep = evaluate_readability(tr.model, images, truth);
        write_report(out, rep);
        for (const auto& l : rep.labels)
            log("%-10s auc %s", l.label.c_str(), l.auc ? format_metric(*l.auc).c_str() : "n/a");
    }
    log("readability trained in %.1f s", clock.seconds());
}

void train_restorer_cmd(const Common& c, const std::string& data) {
    const ExperimentConfig cfg = load_config(c);
    const fs::path out = out_dir(c);
    const auto corpus = corpus_for(cfg, data);
    const DatasetSplit s = split_for(cfg, corpus);
    Clock clock;
    const RestorerTraining tr = train_restorer(cfg.restorer, corpus, s.train, [&](int epoch, double loss) {
        log("epoch %d/%d loss %.6f (%.0f s)", epoch, cfg.restorer.optimizer.epochs, loss, clock.seconds());
    });
    save_checkpoint(out / "restorer.rrgn", tr.model->to_checkpoint());
    write_loss_csv(out / "restorer_loss.csv", tr.epoch_loss);
    write_json(out / "restorer_config.json", to_json(cfg.restorer));
}

struct RestoreArgs {
    std::string data, input, split = "test", readability, restorer;
};

void restore_cmd(const Common& c, const RestoreArgs& a) {
    const ExperimentConfig cfg = load_config(c);
    const fs::path out = out_dir(c);
    const ReadabilityClassifier clf = classifier_from_checkpoint(load_checkpoint(a.readability), cfg.readability);
    const auto model = Restorer::from_checkpoint(load_checkpoint(a.restorer), cfg.restorer);
    fs::create_directories(out / "restored");

    auto entry = [](const RestorationResult& r) {
        nlohmann::json j = {{"id", r.id},
                            {"ran_diffusion", r.ran_diffusion},
                            {"verified", r.verified},
                            {"labels_before", r.labels_before.bits()},
                            {"labels_after", r.labels_after.bits()}};
        if (r.metrics) j["metrics"] = {{"psnr", r.metrics->psnr}, {"ssim", r.metrics->ssim}, {"lpips", r.metrics->lpips}};
        return j;
    };

    if (!a.input.empty()) {
        const Image img = read_png(a.input);
        const std::string id = fs::path(a.input).stem().string();
        const RestorationResult r = restore(img, clf, *model, derive_seed(cfg.seed, id), id);
        write_png(out / "restored" / (id + ".png"), r.restored);
        write_json(out / "restore_report.json", {{"results", {entry(r)}}});
        log("%s: %s, verified=%d", id.c_str(), r.ran_diffusion ? "restored" : "passed through", r.verified);
        return;
    }

    const auto corpus = corpus_for(cfg, a.data);
    const auto idx = select(split_for(cfg, corpus), a.split, static_cast<int>(corpus.size()));
    const EvaluationSummary s =
        evaluate_restoration(corpus, idx, clf, *model, cfg.seed, PerceptualMetric::fixed_random());
    std::vector<MetricsRow> rows;
    nlohmann::json results = nlohmann::json::array();
    for (const auto& r : s.results) {
        write_png(out / "restored" / (r.id + ".png"), r.restored);
        rows.push_back(*r.metrics);
        results.push_back(entry(r));
    }
    write_metrics_csv(out / "metrics.csv", rows);
    write_metrics_csv(out / "metrics_degraded.csv", s.degraded);
    nlohmann::json rep = to_json(s);
    rep["split"] = a.split;
    rep["results"] = results;
    write_json(out / "restore_report.json", rep);
    log("%zu images, %d restored, %d verified; PSNR %.3f -> %.3f dB (gain %+.3f)", s.results.size(), s.n_restored,
        s.n_verified, s.mean_psnr_degraded, s.mean_psnr_restored, s.psnr_gain);
}

// Scores a directory of restored PNGs against the corpus's clean images.
void evaluate_cmd(const Common& c, const std::string& data, const std::string& restored) {
    const ExperimentConfig cfg = load_config(c);
    const fs::path out = out_dir(c);
    const auto corpus = corpus_for(cfg, data);
    const PerceptualMetric lpips = PerceptualMetric::fixed_random();
    std::vector<MetricsRow> rows, degraded;
    for (const auto& s : corpus) {
        const fs::path p = fs::path(restored) / (s.id + ".png");
        if (!fs::exists(p)) continue;
        rows.push_back(score_pair(s.id, read_png(p), s.clean, lpips));
        degraded.push_back(score_pair(s.id, s.image, s.clean, lpips));
    }
    if (rows.empty()) throw PipelineError("evaluate: no restored image in '" + restored + "' matches the corpus");
    write_metrics_csv(out / "metrics.csv", rows);
    auto mean = [](const std::vector<MetricsRow>& v, auto field) {
        double t = 0;
        for (const auto& r : v) t += field(r);
        return t / static_cast<double>(v.size());
    };
    auto psnr = [](const MetricsRow& r) { return std::min(r.psnr, kPsnrCap); };
    auto ssim = [](const MetricsRow& r) { return r.ssim; };
    auto lp = [](const MetricsRow& r) { return r.lpips; };
    const nlohmann::json rep = {
        {"n", rows.size()},
        {"restored", {{"psnr", mean(rows, psnr)}, {"ssim", mean(rows, ssim)}, {"lpips", mean(rows, lp)}}},
        {"degraded", {{"psnr", mean(degraded, psnr)}, {"ssim", mean(degraded, ssim)}, {"lpips", mean(degraded, lp)}}},
        {"psnr_gain", mean(rows, psnr) - mean(degraded, psnr)},
        {"psnr_cap", kPsnrCap}};
    write_json(out / "evaluation_report.json", rep);
    log("%zu images; PSNR gain %+.3f dB", rows.size(), rep["psnr_gain"].get<double>());
}

void compare_cmd(const Common& c, const std::string& which) {
    const ExperimentConfig cfg = load_config(c);
    const fs::path out = out_dir(c);
    const auto corpus = compare_corpus(cfg);
    Clock clock;
    auto on_row = [&](const CompareRow& r) {
        log("%-20s psnr %.3f ssim %.4f lpips %.4f (%.0f s)", r.name.c_str(), r.psnr, r.ssim, r.lpips, clock.seconds());
    };
    CompareTable t;
    if (which == "backbones") t = compare_backbones(cfg, corpus, on_row);
    if (which == "extractors") t = compare_extractors(cfg, corpus, on_row);
    if (which == "fusion") t = compare_fusion(cfg, corpus, on_row);
    write_compare_csv(out / ("compare_" + which + ".csv"), t);
    write_json(out / ("compare_" + which + "_report.json"), to_json(t));
    log("degraded baseline psnr %.3f over %zu images", t.baseline.psnr, t.eval_ids.size());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Readability-guided fundus image restoration"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "JSON experiment config")->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "Overrides the config seed");
        sub->add_option("--out", common.out, "Output directory")->capture_default_str();
    };

    std::string data, restored;
    RestoreArgs ra;

    auto* gen = app.add_subcommand("gen-data", "Write a synthetic corpus (images, clean targets, manifest)");
    add_common(gen);
    auto* trd = app.add_subcommand("train-readability", "Train the readability classifier");
    add_common(trd);
    trd->add_option("--data", data, "Corpus directory (default: generate from the config)");
    auto* trr = app.add_subcommand("train-restorer", "Train the conditional restorer");
    add_common(trr);
    trr->add_option("--data", data, "Corpus directory (default: generate from the config)");
    auto* rst = app.add_subcommand("restore", "Screen, restore and re-verify images");
    add_common(rst);
    rst->add_option("--readability", ra.readability, "Classifier checkpoint")->required()->check(CLI::ExistingFile);
    rst->add_option("--restorer", ra.restorer, "Restorer checkpoint")->required()->check(CLI::ExistingFile);
    auto* in = rst->add_option("--input", ra.input, "One PNG to restore")->check(CLI::ExistingFile);
    rst->add_option("--data", ra.data, "Corpus directory (default: generate from the config)")->excludes(in);
    rst->add_option("--split", ra.split, "Corpus part to restore")
        ->check(CLI::IsMember({"train", "val", "test", "all"}))
        ->capture_default_str()
        ->excludes(in);
    auto* ev = app.add_subcommand("evaluate", "Score restored PNGs against the clean images");
    add_common(ev);
    ev->add_option("--data", data, "Corpus directory (default: generate from the config)");
    ev->add_option("--restored", restored, "Directory of <id>.png")->required()->check(CLI::ExistingDirectory);
    auto* cb = app.add_subcommand("compare-backbones", "Toy-scale comparison of the five backbones");
    add_common(cb);
    auto* ce = app.add_subcommand("compare-extractors", "Toy-scale comparison of the eight extractors");
    add_common(ce);
    auto* cf = app.add_subcommand("compare-fusion", "Toy-scale comparison of the four fusion strategies");
    add_common(cf);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) gen_data(common);
        if (trd->parsed()) train_readability_cmd(common, data);
        if (trr->parsed()) train_restorer_cmd(common, data);
        if (rst->parsed()) restore_cmd(common, ra);
        if (ev->parsed()) evaluate_cmd(common, data, restored);
        if (cb->parsed()) compare_cmd(common, "backbones");
        if (ce->parsed()) compare_cmd(common, "extractors");
        if (cf->parsed()) compare_cmd(common, "fusion");
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
