// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "rr/core/checkpoint.hpp"
#include "rr/dataset/split.hpp"
#include "rr/pipeline/config.hpp"
#include "rr/pipeline/experiments.hpp"
#include "rr/pipeline/restorer.hpp"

using namespace rr;
using nlohmann::json;

namespace {

// Small enough to train in well under a second per epoch.
RestorerConfig tiny_config(int epochs = 1) {
    RestorerConfig c;
    c.image_size = 32;
    c.width = 8;
    c.time_dim = 16;
    c.vae_channels = {8, 16, 32};
    c.latent_dim = 32;
    c.extractor.width = 16;
    c.extractor.input_size = 32;
    c.extractor.attention.embed_dim = 32;
    c.extractor.attention.heads = 4;
    c.optimizer.epochs = epochs;
    c.optimizer.batch_size = 8;
    c.seed = 11;
    return c;
}

const std::vector<FundusSample>& corpus20() {
    static const auto c = generate_synthetic_fundus(5, 20, 32);
    return c;
}

std::vector<int> all_indices(std::size_t n) {
    std::vector<int> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<int>(i);
    return v;
}

// A classifier whose every label reads readable (bias > 0) or unreadable.
ReadabilityClassifier constant_classifier(bool readable) {
    ClassifierConfig cc;
    cc.input_size = 32;
    cc.width = 8;
    ReadabilityClassifier clf(cc, 1);
    clf.net.zero_head();
    clf.net.params().get("head/bias").mutable_value().fill(readable ? 8.0f : -8.0f);
    return clf;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("rr_test_pipeline_" + name);
}

}  // namespace

TEST(PipelineConfig, DefaultsValidateAndRoundTrip) {
    const ExperimentConfig c;
    EXPECT_NO_THROW(c.validate());
    const json j = to_json(c);
    EXPECT_EQ(to_json(experiment_config_from_json(j)).dump(), j.dump());
    const json r = to_json(c.restorer);
    EXPECT_EQ(to_json(restorer_config_from_json(r)).dump(), r.dump());
}

TEST(PipelineConfig, RejectsUnknownKeysAtAnyDepth) {
    for (const char* text : {R"({"sede": 1})", R"({"restorer": {"widht": 8}})",
                             R"({"restorer": {"extractor": {"kind": "res34", "depth": 3}}})",
                             R"({"data": {"split": {"train": 1, "holdout": 1}}})", R"({"compare": {"rows": 5}})"}) {
        try {
            experiment_config_from_json(json::parse(text));
            ADD_FAILURE() << text;
        } catch (const ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find("unknown config key"), std::string::npos) << e.what();
        }
    }
    try {
        experiment_config_from_json(json::parse(R"({"restorer": {"fusion": {"strategy": "bilinear_static", "gain": 1}}})"));
        ADD_FAILURE();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("restorer.fusion.gain"), std::string::npos) << e.what();
    }
}

TEST(PipelineConfig, RejectsBadTypesAndValues) {
    EXPECT_THROW(experiment_config_from_json(json::parse(R"({"restorer": {"width": "wide"}})")), ConfigError);
    EXPECT_THROW(experiment_config_from_json(json::parse(R"({"restorer": {"backbone": "transformer"}})")), ConfigError);
    EXPECT_THROW(experiment_config_from_json(json::parse(R"({"restorer": {"image_size": 30}})")), ConfigError);
    EXPECT_THROW(experiment_config_from_json(json::parse(R"({"restorer": {"restore": {"t_start": 51}}})")), ConfigError);
    EXPECT_THROW(experiment_config_from_json(json::parse(R"({"restorer": {"pairing": "both"}})")), ConfigError);
    EXPECT_THROW(experiment_config_from_json(json::parse(R"({"restorer": {"seed": 3}})")), ConfigError);
    EXPECT_THROW(experiment_config_from_json(json::parse(R"({"restorer": {"restore": {"target_labels": ["fovea"]}}})")),
                 ConfigError);
    EXPECT_THROW(experiment_config_from_json(json::parse("[1, 2]")), ConfigError);
    EXPECT_THROW(load_experiment_config(temp_path("missing.json")), Error);
}

TEST(PipelineConfig, SeedPropagatesToRestorer) {
    const auto c = experiment_config_from_json(json::parse(R"({"seed": 99})"));
    EXPECT_EQ(c.restorer.seed, 99u);
}

TEST(TrainRestorer, OneEpochSmokeWritesLoadableCheckpoint) {
    const auto& corpus = corpus20();
    const auto tr = train_restorer(tiny_config(1), corpus, all_indices(corpus.size()));
    ASSERT_EQ(tr.epoch_loss.size(), 1u);
    EXPECT_TRUE(std::isfinite(tr.epoch_loss[0]));

    const auto path = temp_path("smoke.rrgn");
    save_checkpoint(path, tr.model->to_checkpoint());
    const auto loaded = Restorer::from_checkpoint(load_checkpoint(path), tiny_config(1));
    std::filesystem::remove(path);

    nn::Tensor<float> x({2, 3, 32, 32});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>((i % 97) / 97.0);
    const auto a = tr.model->restore_batch(x, 3), b = loaded->restore_batch(x, 3);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]);
}

TEST(TrainRestorer, HistoryLengthEqualsEpochsForEveryBackbone) {
    const auto& corpus = corpus20();
    for (Backbone b : {Backbone::unet, Backbone::unet_pp, Backbone::resnet_unet, Backbone::densenet_unet, Backbone::vae}) {
        RestorerConfig c = tiny_config(2);
        c.backbone = b;
        const auto tr = train_restorer(c, corpus, all_indices(10));
        EXPECT_EQ(tr.epoch_loss.size(), 2u) << to_string(b);
    }
    RestorerConfig c = tiny_config(3);
    c.pairing = "clean";
    c.min_snr_gamma = 0;
    c.parameterization = Parameterization::eps;
    c.extractor.freeze = false;
    c.extractor.joint_sources = 2;
    EXPECT_EQ(train_restorer(c, corpus, all_indices(10)).epoch_loss.size(), 3u);
}

TEST(TrainRestorer, DeterministicPerSeed) {
    const auto& corpus = corpus20();
    const auto a = train_restorer(tiny_config(2), corpus, all_indices(12));
    const auto b = train_restorer(tiny_config(2), corpus, all_indices(12));
    EXPECT_EQ(a.epoch_loss, b.epoch_loss);
    EXPECT_EQ(serialize_checkpoint(a.model->to_checkpoint()), serialize_checkpoint(b.model->to_checkpoint()));
}

TEST(TrainRestorer, NoReadableImageIsPipelineError) {
    auto corpus = corpus20();
    for (auto& s : corpus) s.labels.optic_disc = false;
    EXPECT_THROW(train_restorer(tiny_config(1), corpus, all_indices(corpus.size())), PipelineError);
    EXPECT_THROW(train_restorer(tiny_config(1), corpus20(), {}), PipelineError);
}

TEST(TrainRestorer, NonFiniteLossNamesTheEpoch) {
    auto corpus = corpus20();
    for (auto& s : corpus) s.clean.at(0, 0, 0) = std::numeric_limits<double>::quiet_NaN();
    try {
        train_restorer(tiny_config(2), corpus, all_indices(corpus.size()));
        ADD_FAILURE() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
    }
}

TEST(Restore, ReadableInputPassesThroughUntouched) {
    const auto tr = train_restorer(tiny_config(1), corpus20(), all_indices(8));
    const auto clf = constant_classifier(true);
    for (const auto& s : corpus20()) {
        const RestorationResult r = restore(s.image, clf, *tr.model, 1, s.id);
        EXPECT_FALSE(r.ran_diffusion);
        EXPECT_TRUE(r.verified);
        ASSERT_EQ(r.restored.data(), s.image.data());
    }
}

TEST(Restore, UnreadableInputRunsDiffusionAndIsReclassified) {
    const auto tr = train_restorer(tiny_config(1), corpus20(), all_indices(8));
    const auto clf = constant_classifier(false);
    const auto& s = corpus20()[0];
    const RestorationResult r = restore(s.image, clf, *tr.model, 1, s.id);
    EXPECT_TRUE(r.ran_diffusion);
    EXPECT_FALSE(r.labels_after.optic_disc);
    EXPECT_FALSE(r.verified);
    EXPECT_EQ(r.restored.height(), s.image.height());
}

TEST(Restore, OutputIsClampedForAnyInput) {
    RestorerConfig c = tiny_config(1);
    c.restore.t_start = 10;
    c.restore.stochastic = true;
    const auto tr = train_restorer(c, corpus20(), all_indices(8));
    nn::Tensor<float> x({2, 3, 32, 32});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(((i * 7919) % 1000) / 100.0 - 5.0);
    const auto y = tr.model->restore_batch(x, 9);
    for (std::size_t i = 0; i < y.size(); ++i) {
        ASSERT_GE(y[i], 0.0f);
        ASSERT_LE(y[i], 1.0f);
    }
}

TEST(Restore, ScheduleMismatchIsCompatibilityError) {
    const auto tr = train_restorer(tiny_config(1), corpus20(), all_indices(8));
    const Checkpoint ckpt = tr.model->to_checkpoint();
    RestorerConfig other_t = tiny_config(1);
    other_t.schedule.timesteps = 40;
    EXPECT_THROW(Restorer::from_checkpoint(ckpt, other_t), CompatibilityError);
    RestorerConfig other_beta = tiny_config(1);
    other_beta.schedule.beta_end = 0.03;
    EXPECT_THROW(Restorer::from_checkpoint(ckpt, other_beta), CompatibilityError);
    RestorerConfig other_width = tiny_config(1);
    other_width.width = 16;
    EXPECT_THROW(Restorer::from_checkpoint(ckpt, other_width), CompatibilityError);
    EXPECT_THROW(Restorer::from_checkpoint(Checkpoint{}, tiny_config(1)), CompatibilityError);
}

TEST(Evaluation, PsnrGainOfPassThroughIsZero) {
    const auto tr = train_restorer(tiny_config(1), corpus20(), all_indices(8));
    const auto clf = constant_classifier(true);
    const auto s = evaluate_restoration(corpus20(), all_indices(20), clf, *tr.model, 1, PerceptualMetric::fixed_random());
    EXPECT_EQ(s.n_restored, 0);
    EXPECT_EQ(s.psnr_gain, 0.0);
    EXPECT_TRUE(std::isfinite(s.mean_psnr_restored));
}

TEST(LossCsv, HeaderAndRows) {
    const auto path = temp_path("loss.csv");
    write_loss_csv(path, {0.5, 0.25});
    std::ifstream in(path);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::filesystem::remove(path);
    EXPECT_EQ(all, "epoch,loss\n1,0.50000000\n2,0.25000000\n");
}

namespace {

ExperimentConfig tiny_compare() {
    ExperimentConfig c;
    c.compare.count = 40;
    c.compare.image_size = 32;
    c.compare.epochs = 1;
    c.compare.width = 4;
    c.compare.extractor_width = 8;
    c.compare.embed_dim = 16;
    c.compare.heads = 4;
    c.compare.max_eval = 2;
    c.restorer.time_dim = 16;
    return c;
}

}  // namespace

TEST(Compare, RowCountsNamesAndRerunIdentity) {
    const ExperimentConfig cfg = tiny_compare();
    ASSERT_NO_THROW(cfg.validate());
    const auto corpus = compare_corpus(cfg);
    const auto b = compare_backbones(cfg, corpus);
    ASSERT_EQ(b.rows.size(), 5u);
    EXPECT_EQ(b.rows[4].name, "vae");
    const auto e = compare_extractors(cfg, corpus);
    ASSERT_EQ(e.rows.size(), 8u);
    EXPECT_EQ(e.rows[0].name, "self_attention_only");
    const auto f = compare_fusion(cfg, corpus);
    ASSERT_EQ(f.rows.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(f.rows[i].name, FusionStrategy::all()[i].key());
        EXPECT_TRUE(f.rows[i].reference.has_value());
    }
    const auto f2 = compare_fusion(cfg, corpus);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(f.rows[i].psnr, f2.rows[i].psnr, 1e-5);
        EXPECT_NEAR(f.rows[i].ssim, f2.rows[i].ssim, 1e-5);
        EXPECT_NEAR(f.rows[i].lpips, f2.rows[i].lpips, 1e-5);
    }

    const auto path = temp_path("compare.csv");
    write_compare_csv(path, e);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    std::filesystem::remove(path);
    EXPECT_EQ(header, "extractor,psnr,ssim,lpips");
    EXPECT_EQ(rows, 8);
}

TEST(Compare, EvalIndicesAreUnreadableTestImages) {
    const ExperimentConfig cfg = tiny_compare();
    const auto corpus = compare_corpus(cfg);
    const auto split = split_dataset(static_cast<int>(corpus.size()), cfg.data.split, cfg.seed);
    for (int i : compare_eval_indices(cfg, corpus)) {
        EXPECT_FALSE(corpus[static_cast<std::size_t>(i)].labels.optic_disc);
        EXPECT_NE(std::find(split.test.begin(), split.test.end(), i), split.test.end());
    }
}
