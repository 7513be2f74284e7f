// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rr/condfeat/extractor.hpp"
#include "rr/dataset/split.hpp"
#include "rr/dataset/synthetic.hpp"
#include "rr/diffusion/denoiser.hpp"
#include "rr/fusion/fusion.hpp"
#include "rr/readability/classifier.hpp"

namespace rr {

struct ScheduleConfig {
    int timesteps = 50;
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

struct OptimizerConfig {
    double learning_rate = 1e-3;
    int batch_size = 16;
    int epochs = 50;
};

/// How restoration runs on images the screening classifier flags.
struct RestoreConfig {
    /// The chain starts from the degraded image diffused to this step.
    int t_start = 1;
    /// Draw fresh noise at every step but the last; otherwise the chain is
    /// deterministic given the start noise.
    bool stochastic = false;
    /// Labels that must read as readable for an image to pass screening
    /// (and for a restoration to count as verified).
    std::vector<Label> target_labels{Label::optic_disc};
};

struct RestorerConfig {
    int image_size = 64;
    ScheduleConfig schedule{};
    Backbone backbone = Backbone::unet;
    Parameterization parameterization = Parameterization::x0;
    int width = 32;
    int time_dim = 64;
    std::array<int, 3> vae_channels{32, 64, 128};
    int latent_dim = 128;
    /// Weight of the latent KL term for the vae backbone.
    double kl_weight = 1e-3;
    FusionStrategy fusion = FusionStrategy::from_key("bilinear_static");
    ConditionMode condition_mode = ConditionMode::add;
    /// "clean": diffuse the clean target of every training sample.
    /// "degraded": diffuse the observed image instead and regress the noise
    /// that maps x_t back to the clean target.
    std::string pairing = "degraded";
    /// When > 0, each sample's noise MSE is weighted by min(snr, gamma) / snr
    /// with snr = ab / (1 - ab), which caps the weight of nearly clean steps.
    double min_snr_gamma = 5;
    ExtractorConfig extractor{};
    OptimizerConfig optimizer{};
    RestoreConfig restore{};
    std::uint64_t seed = 7;

    DenoiserConfig denoiser_config() const;
    /// Throws ConfigError naming the first invalid field.
    void validate() const;
};

struct DataConfig {
    int count = 200;
    int image_size = 64;
    double degraded_fraction = 0.6;
    /// "default" or "separable_blur".
    std::string categories = "default";
    SplitRatios split{};

    GeneratorConfig generator_config() const;
    void validate() const;
};

/// Toy-scale settings shared by the three comparison harnesses.
struct CompareConfig {
    int count = 80;
    int image_size = 32;
    int epochs = 40;
    int width = 16;
    int extractor_width = 16;
    /// Attention size of the extractor; embed_dim must not exceed the tapped
    /// channel count, 4 * extractor_width.
    int embed_dim = 64;
    int heads = 8;
    /// Test images scored per row (target region unreadable ground truth).
    int max_eval = 12;
};

/// Everything the command-line tool reads from one JSON file. Every object is
/// parsed strictly: an unknown key is a ConfigError.
struct ExperimentConfig {
    std::uint64_t seed = 7;
    DataConfig data{};
    ClassifierConfig readability{};
    RestorerConfig restorer{};
    CompareConfig compare{};

    ExperimentConfig();
    void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& c);

RestorerConfig restorer_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RestorerConfig& c);

std::string to_string(ConditionMode m);
ConditionMode condition_mode_from_string(const std::string& s);

}  // namespace rr
