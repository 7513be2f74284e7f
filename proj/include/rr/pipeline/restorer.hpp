// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rr/condfeat/extractor.hpp"
#include "rr/core/checkpoint.hpp"
#include "rr/dataset/synthetic.hpp"
#include "rr/diffusion/denoiser.hpp"
#include "rr/diffusion/schedule.hpp"
#include "rr/fusion/fusion.hpp"
#include "rr/metrics/metrics.hpp"
#include "rr/pipeline/config.hpp"
#include "rr/readability/classifier.hpp"

namespace rr {

/// Conditional denoiser, fusion module, feature extractor and the pooled
/// condition they share. Parameters are float.
///
/// Every denoiser call sees fuse(c, x_t); the chain itself carries the
/// unconditioned x_t, so the condition is never rescaled by the reverse step.
class Restorer {
public:
    explicit Restorer(const RestorerConfig& config);
    ~Restorer();
    Restorer(const Restorer&) = delete;
    Restorer& operator=(const Restorer&) = delete;

    const RestorerConfig& config() const { return config_; }
    const NoiseSchedule& schedule() const { return schedule_; }

    /// Denoiser and fusion parameters.
    nn::ParamStore<float>& params() { return *params_; }
    const nn::ParamStore<float>& params() const { return *params_; }
    nn::ParamStore<float>& extractor_params() { return *extractor_params_; }
    const FeatureExtractor<float>& extractor() const { return *extractor_; }
    const Denoiser<float>& denoiser() const { return *denoiser_; }
    const Fusion<float>& fusion() const { return *fusion_; }

    /// Pooled condition map [D, s, s].
    void set_condition(nn::Tensor<float> pooled);
    bool has_condition() const { return condition_.size() > 0; }
    const nn::Tensor<float>& condition() const { return condition_; }
    /// The stored condition as a [1, D, s, s] constant.
    nn::Var<float> condition_var() const;

    struct Prediction {
        nn::Var<float> eps;
        nn::Var<float> mu, log_var;  // latent of the vae backbone, else undefined
    };

    /// Noise estimate for x_t [N, 3, S, S] at per-sample steps t, conditioned
    /// on c [1, D, s, s]. `latent_rng` samples the vae latent (mean if null).
    Prediction predict(const nn::Var<float>& x_t, const std::vector<int>& t, const nn::Var<float>& c,
                       Rng* latent_rng = nullptr) const;

    /// Runs the reverse chain from the degraded batch x [N, 3, S, S] diffused
    /// to restore.t_start. The result is clamped into [0, 1].
    nn::Tensor<float> restore_batch(const nn::Tensor<float>& x, std::uint64_t seed) const;
    /// restore_batch on one image of any size (resized in and out).
    Image restore_image(const Image& degraded, std::uint64_t seed) const;

    /// Arrays: sched/beta, sched/alpha_bar, condition/pooled, every denoiser
    /// and fusion parameter, and the extractor when it was trained.
    Checkpoint to_checkpoint() const;
    /// Rebuilds a restorer for `config` and loads `ckpt` into it. A schedule
    /// or shape that disagrees with the config is a CompatibilityError.
    static std::unique_ptr<Restorer> from_checkpoint(const Checkpoint& ckpt, const RestorerConfig& config);

private:
    RestorerConfig config_;
    NoiseSchedule schedule_;
    std::unique_ptr<nn::ParamStore<float>> params_, extractor_params_;
    std::unique_ptr<Denoiser<float>> denoiser_;
    std::unique_ptr<Fusion<float>> fusion_;
    std::unique_ptr<FeatureExtractor<float>> extractor_;
    nn::Tensor<float> condition_;
};

struct RestorerTraining {
    std::unique_ptr<Restorer> model;
    std::vector<double> epoch_loss;  // mean training loss per epoch
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Training images resized to the restorer size: clean targets of `train`
/// and the observed images of its fully readable members.
struct RestorerData {
    std::vector<nn::Tensor<float>> targets;  // [3, S, S]
    std::vector<nn::Tensor<float>> observed;  // same order as targets
    std::vector<nn::Tensor<float>> readable;
};

RestorerData restorer_data(const std::vector<FundusSample>& corpus, const std::vector<int>& train, int size);

/// Builds the pooled condition from the readable images, then trains the
/// denoiser (and fusion) on noise MSE over q_sample'd clean targets. The vae
/// backbone adds kl_weight times the latent KL. A non-finite epoch loss is a
/// TrainingError naming the epoch; no readable image is a PipelineError.
RestorerTraining train_restorer(const RestorerConfig& config, const std::vector<FundusSample>& corpus,
                                const std::vector<int>& train, const EpochCallback& on_epoch = {});

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& epoch_loss);

struct RestorationResult {
    std::string id;
    Image restored;
    ReadabilityLabels labels_before;
    ReadabilityLabels labels_after;
    bool ran_diffusion = false;
    bool verified = false;
    std::optional<MetricsRow> metrics;  // against the clean image when known
};

/// Screens `image` with `classifier`. If every target label already reads
/// as readable the image passes through untouched; otherwise it is restored,
/// re-classified by the same classifier, and verified when every target
/// label then reads as readable.
RestorationResult restore(const Image& image, const ReadabilityClassifier& classifier, const Restorer& restorer,
                          std::uint64_t seed, const std::string& id = "");

/// PSNR above this is treated as this value when averaging, so identical
/// pass-through pairs (+inf) contribute a finite, equal amount on both sides.
inline constexpr double kPsnrCap = 100.0;

struct EvaluationSummary {
    std::vector<RestorationResult> results;
    std::vector<MetricsRow> degraded;  // observed image vs clean, same order
    double mean_psnr_restored = 0, mean_psnr_degraded = 0, psnr_gain = 0;
    double mean_ssim_restored = 0, mean_ssim_degraded = 0;
    double mean_lpips_restored = 0, mean_lpips_degraded = 0;
    /// Gain over the images that went through diffusion only.
    double psnr_gain_restored_only = 0;
    int n_restored = 0;
    int n_verified = 0;  // among the restored
    double verified_rate() const { return n_restored ? static_cast<double>(n_verified) / n_restored : 0.0; }
};

EvaluationSummary evaluate_restoration(const std::vector<FundusSample>& corpus, const std::vector<int>& indices,
                                       const ReadabilityClassifier& classifier, const Restorer& restorer,
                                       std::uint64_t seed, const PerceptualMetric& lpips);

nlohmann::json to_json(const EvaluationSummary& s);

}  // namespace rr
