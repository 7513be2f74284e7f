// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include "rr/pipeline/restorer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "rr/nn/optim.hpp"
#include "rr/readability/preprocess.hpp"
#include "rr/vae/vae.hpp"

namespace rr {

namespace {

nn::Tensor<float> image_chw(const Image& img) {
    nn::Tensor<float> t = to_tensor<float>(img);
    return nn::Tensor<float>({3, img.height(), img.width()}, std::vector<float>(t.data(), t.data() + t.size()));
}

nn::Tensor<float> stack(const std::vector<nn::Tensor<float>>& items, const std::vector<std::size_t>& pick) {
    const nn::Shape s = items[pick[0]].shape();
    nn::Tensor<float> out({static_cast<int>(pick.size()), s[0], s[1], s[2]});
    const std::size_t per = items[pick[0]].size();
    for (std::size_t i = 0; i < pick.size(); ++i)
        std::copy(items[pick[i]].data(), items[pick[i]].data() + per, out.data() + i * per);
    return out;
}

// Per-sample constant broadcast over [N, C, H, W].
nn::Var<float> per_sample(const std::vector<double>& v, const nn::Shape& shape) {
    nn::Tensor<float> t(shape);
    const std::size_t per = t.size() / v.size();
    for (std::size_t n = 0; n < v.size(); ++n)
        std::fill(t.data() + n * per, t.data() + (n + 1) * per, static_cast<float>(v[n]));
    return nn::Var<float>(std::move(t));
}

// Mean over the batch axis of [N, D, h, w] -> [1, D, h, w], differentiable.
nn::Var<float> batch_mean(const nn::Var<float>& x) {
    const int n = x.dim(0);
    const nn::Shape s = x.shape();
    const nn::Var<float> flat = nn::reshape(x, {n, static_cast<int>(x.size()) / n});
    const nn::Var<float> w(nn::Tensor<float>({1, n}, 1.0f / static_cast<float>(n)));
    return nn::reshape(nn::matmul(w, flat), {1, s[1], s[2], s[3]});
}

std::vector<double> to_doubles(const NamedArray& a) { return {a.data.begin(), a.data.end()}; }

}  // namespace

Restorer::Restorer(const RestorerConfig& config) : config_(config) {
    config_.validate();
    schedule_ = make_schedule(config_.schedule.timesteps, config_.schedule.beta_start, config_.schedule.beta_end);
    params_ = std::make_unique<nn::ParamStore<float>>();
    extractor_params_ = std::make_unique<nn::ParamStore<float>>();
    Rng ext_rng(derive_seed(config_.seed, "restorer/extractor"));
    extractor_ = std::make_unique<FeatureExtractor<float>>(*extractor_params_, config_.extractor, ext_rng);
    Rng rng(derive_seed(config_.seed, "restorer/init"));
    denoiser_ = std::make_unique<Denoiser<float>>(*params_, config_.denoiser_config(), rng);
    fusion_ = std::make_unique<Fusion<float>>(*params_, config_.fusion, config_.extractor.attention.embed_dim,
                                              config_.extractor.out_size(), config_.image_size, 3, rng);
}

Restorer::~Restorer() = default;

void Restorer::set_condition(nn::Tensor<float> pooled) {
    const int d = config_.extractor.attention.embed_dim, s = config_.extractor.out_size();
    require(pooled.shape() == nn::Shape{d, s, s}, "condition must be [", d, ", ", s, ", ", s, "], got ",
            nn::shape_str(pooled.shape()));
    condition_ = std::move(pooled);
}

nn::Var<float> Restorer::condition_var() const {
    require<PipelineError>(has_condition(), "restorer has no condition map");
    nn::Tensor<float> t = condition_;
    const nn::Shape s = t.shape();
    return nn::Var<float>(nn::Tensor<float>({1, s[0], s[1], s[2]}, std::vector<float>(t.data(), t.data() + t.size())));
}

Restorer::Prediction Restorer::predict(const nn::Var<float>& x_t, const std::vector<int>& t, const nn::Var<float>& c,
                                       Rng* latent_rng) const {
    const nn::Var<float> cm = fusion_->match(c);
    const nn::Var<float> input = config_.condition_mode == ConditionMode::add
                                     ? (*fusion_)(cm, x_t)
                                     : nn::concat<float>({nn::repeat_batch(cm, x_t.dim(0)), x_t}, 1);
    DenoiserOutput<float> out = denoiser_->forward(input, t, latent_rng);
    Prediction p{out.out, out.mu, out.log_var};
    if (config_.parameterization == Parameterization::x0) {
        // eps = (x_t - sqrt(ab) x0) / sqrt(1 - ab)
        std::vector<double> a(t.size()), inv(t.size());
        for (std::size_t n = 0; n < t.size(); ++n) {
            const double ab = schedule_.alpha_bar_at(t[n]);
            a[n] = std::sqrt(ab);
            inv[n] = 1.0 / std::sqrt(1.0 - ab);
        }
        p.eps = nn::mul(nn::sub(x_t, nn::mul(out.out, per_sample(a, x_t.shape()))), per_sample(inv, x_t.shape()));
    }
    return p;
}

nn::Tensor<float> Restorer::restore_batch(const nn::Tensor<float>& x, std::uint64_t seed) const {
    require(x.ndim() == 4 && x.dim(1) == 3 && x.dim(2) == config_.image_size && x.dim(3) == config_.image_size,
            "restore_batch: expected [N, 3, ", config_.image_size, ", ", config_.image_size, "], got ",
            nn::shape_str(x.shape()));
    nn::NoGradGuard guard;
    Rng rng(derive_seed(seed, "restorer/chain"));
    const int ts = config_.restore.t_start;
    const nn::Tensor<float> start = q_sample(x, ts, gaussian_tensor<float>(x.shape(), rng), schedule_);
    const nn::Var<float> c = condition_var();
    const NoisePredictor<float> model = [&](const nn::Tensor<float>& xt, int t) {
        return predict(nn::Var<float>(xt), std::vector<int>(static_cast<std::size_t>(xt.dim(0)), t), c).eps.value();
    };
    nn::Tensor<float> out = sample_restore(start, ts, model, schedule_, rng, config_.restore.stochastic);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], 0.0f, 1.0f);
    return out;
}

Image Restorer::restore_image(const Image& degraded, std::uint64_t seed) const {
    const int s = config_.image_size;
    const Image in = preprocess(degraded, s);
    Image out = from_tensor(restore_batch(to_tensor<float>(in), seed));
    if (degraded.height() != s || degraded.width() != s) {
        out = resize_bilinear(out, degraded.height(), degraded.width());
        out.clamp01();
    }
    return out;
}

Checkpoint Restorer::to_checkpoint() const {
    Checkpoint ck;
    ck.put("sched/beta", nn::Tensor<double>({schedule_.T}, schedule_.beta));
    ck.put("sched/alpha_bar", nn::Tensor<double>({schedule_.T + 1}, schedule_.alpha_bar));
    if (has_condition()) ck.put("condition/pooled", condition_);
    store_params(ck, *params_, "");
    if (!config_.extractor.freeze) store_params(ck, *extractor_params_, "");
    return ck;
}

std::unique_ptr<Restorer> Restorer::from_checkpoint(const Checkpoint& ckpt, const RestorerConfig& config) {
    auto r = std::make_unique<Restorer>(config);
    if (!ckpt.contains("sched/beta") || !ckpt.contains("sched/alpha_bar"))
        throw CompatibilityError("checkpoint has no noise schedule");
    const auto beta = to_doubles(ckpt.get("sched/beta"));
    if (static_cast<int>(beta.size()) != r->schedule_.T)
        throw CompatibilityError("checkpoint schedule has T=" + std::to_string(beta.size()) + ", config expects T=" +
                                 std::to_string(r->schedule_.T));
    // Values are stored as f32; the config must describe the same schedule.
    for (int t = 1; t <= r->schedule_.T; ++t)
        if (std::abs(beta[static_cast<std::size_t>(t - 1)] - r->schedule_.beta_at(t)) > 1e-6 * r->schedule_.beta_at(t))
            throw CompatibilityError("checkpoint beta at t=" + std::to_string(t) + " differs from the configured schedule");
    load_params(ckpt, *r->params_, "");
    if (!config.extractor.freeze) load_params(ckpt, *r->extractor_params_, "");
    if (!ckpt.contains("condition/pooled")) throw CompatibilityError("checkpoint lacks condition/pooled");
    try {
        r->set_condition(ckpt.tensor<float>("condition/pooled"));
    } catch (const ArgumentError& e) {
        throw CompatibilityError(e.what());
    }
    return r;
}

RestorerData restorer_data(const std::vector<FundusSample>& corpus, const std::vector<int>& train, int size) {
    RestorerData d;
    for (int i : train) {
        require(i >= 0 && static_cast<std::size_t>(i) < corpus.size(), "restorer_data: index ", i, " out of range");
        const auto& s = corpus[static_cast<std::size_t>(i)];
        d.targets.push_back(image_chw(preprocess(s.clean, size)));
        d.observed.push_back(image_chw(preprocess(s.image, size)));
        if (s.labels.all()) d.readable.push_back(image_chw(preprocess(s.image, size)));
    }
    return d;
}

RestorerTraining train_restorer(const RestorerConfig& config, const std::vector<FundusSample>& corpus,
                                const std::vector<int>& train, const EpochCallback& on_epoch) {
    config.validate();
    const RestorerData data = restorer_data(corpus, train, config.image_size);
    if (data.targets.empty()) throw PipelineError("train_restorer: empty training split");
    if (data.readable.empty()) throw PipelineError("train_restorer: no readable images to build the condition from");

    RestorerTraining out;
    out.model = std::make_unique<Restorer>(config);
    Restorer& r = *out.model;
    const bool joint = !config.extractor.freeze;
    if (!joint) r.set_condition(build_static_condition(r.extractor(), data.readable).map);

    nn::Adam<float> opt(r.params(), {config.optimizer.learning_rate});
    std::unique_ptr<nn::Adam<float>> ext_opt;
    if (joint) ext_opt = std::make_unique<nn::Adam<float>>(r.extractor_params(), nn::Adam<float>::Options{config.optimizer.learning_rate});

    const NoiseSchedule& s = r.schedule();
    const int bs = config.optimizer.batch_size;
    const bool vae = config.backbone == Backbone::vae;
    const bool paired = config.pairing == "degraded";
    Rng rng(derive_seed(config.seed, "restorer/train"));
    std::vector<std::size_t> order(data.targets.size());
    for (int epoch = 1; epoch <= config.optimizer.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        double total = 0;
        std::size_t seen = 0;
        try {
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(bs)) {
            const std::vector<std::size_t> pick(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bs)));
            const nn::Tensor<float> x0 = stack(data.targets, pick);
            const int n = x0.dim(0);
            std::vector<int> t(static_cast<std::size_t>(n));
            for (auto& v : t) v = rng.uniform_int(1, s.T);
            nn::Tensor<float> eps = gaussian_tensor<float>(x0.shape(), rng);
            nn::Var<float> xt;
            if (paired) {
                // x_t diffuses the observed image; the target noise is the one
                // for which x_t = sqrt(ab) x0 + sqrt(1 - ab) eps holds.
                const nn::Tensor<float> y = stack(data.observed, pick);
                nn::Tensor<float> v = q_sample(y, t, eps, s);
                const std::size_t per = x0.size() / static_cast<std::size_t>(n);
                for (std::size_t k = 0; k < x0.size(); ++k) {
                    const double ab = s.alpha_bar_at(t[k / per]);
                    eps[k] = static_cast<float>((v[k] - std::sqrt(ab) * x0[k]) / std::sqrt(1.0 - ab));
                }
                xt = nn::Var<float>(std::move(v));
            } else {
                xt = nn::Var<float>(q_sample(x0, t, eps, s));
            }

            nn::Var<float> c;
            if (joint) {
                std::vector<std::size_t> src(static_cast<std::size_t>(config.extractor.joint_sources));
                for (auto& v : src) v = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(data.readable.size()) - 1));
                c = batch_mean(r.extractor()(nn::Var<float>(stack(data.readable, src))));
            } else {
                c = r.condition_var();
            }
            const Restorer::Prediction p = r.predict(xt, t, c, vae ? &rng : nullptr);
            nn::Var<float> loss;
            if (config.min_snr_gamma > 0) {
                // Scale both sides by sqrt(w) so the squared error carries w.
                nn::Tensor<float> w(x0.shape());
                const std::size_t per = x0.size() / static_cast<std::size_t>(n);
                for (std::size_t k = 0; k < w.size(); ++k) {
                    const double ab = s.alpha_bar_at(t[k / per]), snr = ab / (1.0 - ab);
                    w[k] = static_cast<float>(std::sqrt(std::min(snr, config.min_snr_gamma) / snr));
                    eps[k] *= w[k];
                }
                loss = noise_mse_loss(nn::mul(p.eps, nn::Var<float>(std::move(w))), nn::Var<float>(eps));
            } else {
                loss = noise_mse_loss(p.eps, nn::Var<float>(eps));
            }
            if (vae && config.kl_weight > 0)
                loss = nn::add(loss, nn::scale(kl_loss(LatentParams<float>{p.mu, p.log_var}, true), static_cast<float>(config.kl_weight)));
            const double lv = loss.item();
            if (!std::isfinite(lv))
                throw TrainingError("restorer loss diverged (non-finite) in epoch " + std::to_string(epoch));
            loss.backward();
            opt.step();
            if (ext_opt) ext_opt->step();
            total += lv * n;
            seen += static_cast<std::size_t>(n);
        }
        } catch (const NumericError& e) {
            // A NaN reaching a loss op surfaces here rather than as a NaN loss.
            throw TrainingError("restorer loss diverged (non-finite) in epoch " + std::to_string(epoch) + ": " + e.what());
        }
        const double mean = total / static_cast<double>(seen);
        out.epoch_loss.push_back(mean);
        if (on_epoch) on_epoch(epoch, mean);
    }
    if (joint) r.set_condition(build_static_condition(r.extractor(), data.readable).map);
    return out;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& epoch_loss) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < epoch_loss.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.8f\n", i + 1, epoch_loss[i]);
        out << buf;
    }
    if (!out) throw IoError("failed writing " + path.string());
}

namespace {

bool targets_readable(const ReadabilityLabels& l, const std::vector<Label>& targets) {
    return std::all_of(targets.begin(), targets.end(), [&](Label t) { return l.get(t); });
}

}  // namespace

RestorationResult restore(const Image& image, const ReadabilityClassifier& classifier, const Restorer& restorer,
                          std::uint64_t seed, const std::string& id) {
    RestorationResult r;
    r.id = id;
    const auto& targets = restorer.config().restore.target_labels;
    r.labels_before = predict_labels(classifier, image);
    if (targets_readable(r.labels_before, targets)) {
        r.restored = image;
        r.labels_after = r.labels_before;
        r.verified = true;
        return r;
    }
    r.ran_diffusion = true;
    r.restored = restorer.restore_image(image, seed);
    r.labels_after = predict_labels(classifier, r.restored);
    r.verified = targets_readable(r.labels_after, targets);
    return r;
}

EvaluationSummary evaluate_restoration(const std::vector<FundusSample>& corpus, const std::vector<int>& indices,
                                       const ReadabilityClassifier& classifier, const Restorer& restorer,
                                       std::uint64_t seed, const PerceptualMetric& lpips) {
    require(!indices.empty(), "evaluate_restoration: no images");
    EvaluationSummary s;
    auto cap = [](double p) { return std::min(p, kPsnrCap); };
    double gain_restored = 0;
    for (int i : indices) {
        require(i >= 0 && static_cast<std::size_t>(i) < corpus.size(), "evaluate_restoration: index out of range");
        const auto& sample = corpus[static_cast<std::size_t>(i)];
        RestorationResult r = restore(sample.image, classifier, restorer, derive_seed(seed, sample.id), sample.id);
        r.metrics = score_pair(sample.id, r.restored, sample.clean, lpips);
        const MetricsRow d = score_pair(sample.id, sample.image, sample.clean, lpips);
        s.mean_psnr_restored += cap(r.metrics->psnr);
        s.mean_psnr_degraded += cap(d.psnr);
        s.mean_ssim_restored += r.metrics->ssim;
        s.mean_ssim_degraded += d.ssim;
        s.mean_lpips_restored += r.metrics->lpips;
        s.mean_lpips_degraded += d.lpips;
        if (r.ran_diffusion) {
            ++s.n_restored;
            if (r.verified) ++s.n_verified;
            gain_restored += cap(r.metrics->psnr) - cap(d.psnr);
        }
        s.degraded.push_back(d);
        s.results.push_back(std::move(r));
    }
    const double n = static_cast<double>(indices.size());
    for (double* v : {&s.mean_psnr_restored, &s.mean_psnr_degraded, &s.mean_ssim_restored, &s.mean_ssim_degraded,
                      &s.mean_lpips_restored, &s.mean_lpips_degraded})
        *v /= n;
    s.psnr_gain = s.mean_psnr_restored - s.mean_psnr_degraded;
    s.psnr_gain_restored_only = s.n_restored ? gain_restored / s.n_restored : 0.0;
    return s;
}

nlohmann::json to_json(const EvaluationSummary& s) {
    return {
        {"images", s.results.size()},
        {"restored", s.n_restored},
        {"verified", s.n_verified},
        {"verified_rate", s.verified_rate()},
        {"mean_psnr_restored", s.mean_psnr_restored},
        {"mean_psnr_degraded", s.mean_psnr_degraded},
        {"psnr_gain", s.psnr_gain},
        {"psnr_gain_restored_only", s.psnr_gain_restored_only},
        {"mean_ssim_restored", s.mean_ssim_restored},
        {"mean_ssim_degraded", s.mean_ssim_degraded},
        {"mean_lpips_restored", s.mean_lpips_restored},
        {"mean_lpips_degraded", s.mean_lpips_degraded},
        {"psnr_cap", kPsnrCap},
    };
}

}  // namespace rr
