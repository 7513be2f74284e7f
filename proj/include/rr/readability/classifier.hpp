// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rr/core/checkpoint.hpp"
#include "rr/dataset/split.hpp"
#include "rr/dataset/synthetic.hpp"
#include "rr/nn/layers.hpp"
#include "rr/readability/labels.hpp"
#include "rr/readability/preprocess.hpp"

namespace rr {

enum class ClassifierBase { inception_small, plain_cnn };

std::string to_string(ClassifierBase base);
ClassifierBase classifier_base_from_string(const std::string& name);

struct ClassifierConfig {
    int input_size = 224;
    int channels = 3;
    ClassifierBase base = ClassifierBase::inception_small;
    double learning_rate = 1e-4;
    std::string optimizer = "rmsprop";
    int epochs = 10;
    int batch_size = 16;
    int width = 16;  // stem channel count; later stages scale from it
    /// Computed from the training labels when absent.
    std::optional<ClassWeights> class_weights;
    AugmentConfig augment{};

    void validate() const;
};

/// Multi-label readability network. Output is (batch, 4) logits; forward()
/// applies an independent sigmoid per label.
template <typename T>
class ReadabilityNet {
public:
    ReadabilityNet(const ClassifierConfig& config, std::uint64_t seed) : config_(config) {
        config_.validate();
        Rng rng(derive_seed(seed, "readability/init"));
        const int w = config_.width;
        if (config_.base == ClassifierBase::plain_cnn) {
            int cin = config_.channels;
            for (int i = 0; i < 3; ++i) {
                layers_.push_back(make_cbr("plain" + std::to_string(i), cin, w << i, 3, 2, rng));
                cin = w << i;
            }
            features_ = cin;
        } else {
            stem_ = make_cbr("stem", config_.channels, w, 3, 2, rng);
            int cin = w;
            const int widths[3] = {w, w * 3 / 2, w * 2};
            for (int s = 0; s < 3; ++s) {
                blocks_.push_back(make_block("stage" + std::to_string(s), cin, widths[s], rng));
                cin = 3 * widths[s];
            }
            features_ = cin;
        }
        head_ = nn::Linear<T>(params_, "head", features_, kNumLabels, rng);
    }

    nn::Var<T> logits(const nn::Var<T>& x) const {
        const auto& s = x.shape();
        require(s.size() == 4 && s[1] == config_.channels && s[2] == config_.input_size && s[3] == config_.input_size,
                "classifier expects [N, ", config_.channels, ", ", config_.input_size, ", ", config_.input_size,
                "], got ", nn::shape_str(s));
        nn::Var<T> h = x;
        if (config_.base == ClassifierBase::plain_cnn) {
            for (const auto& l : layers_) h = l(h);
        } else {
            h = stem_(h);
            for (std::size_t i = 0; i < blocks_.size(); ++i) {
                h = blocks_[i](h);
                if (i + 1 < blocks_.size()) h = nn::max_pool2d(h, 3, 2, 1);
            }
        }
        return head_(nn::global_avg_pool(h));
    }

    nn::Var<T> forward(const nn::Var<T>& x) const { return nn::sigmoid(logits(x)); }

    /// Zeroes the final linear layer (every probability becomes exactly 0.5).
    void zero_head() {
        head_.weight.mutable_value().fill(T(0));
        head_.bias.mutable_value().fill(T(0));
    }

    nn::ParamStore<T>& params() { return params_; }
    const nn::ParamStore<T>& params() const { return params_; }
    const ClassifierConfig& config() const { return config_; }

private:
    struct Cbr {
        nn::Conv2d<T> conv;
        nn::GroupNorm<T> norm;
        nn::Var<T> operator()(const nn::Var<T>& x) const { return nn::relu(norm(conv(x))); }
    };

    // Parallel 1x1 / 1x1-3x3 / 1x1-5x5 / pool-1x1 branches, concatenated.
    struct Block {
        Cbr b1, b3a, b3b, b5a, b5b, bp;
        nn::Var<T> operator()(const nn::Var<T>& x) const {
            return nn::concat<T>({b1(x), b3b(b3a(x)), b5b(b5a(x)), bp(nn::max_pool2d(x, 3, 1, 1))}, 1);
        }
    };

    Cbr make_cbr(const std::string& name, int in, int out, int k, int stride, Rng& rng) {
        return {nn::Conv2d<T>(params_, name + "/conv", in, out, k, stride, k / 2, rng),
                nn::GroupNorm<T>(params_, name + "/norm", out, nn::norm_groups(out), rng)};
    }

    Block make_block(const std::string& name, int in, int c, Rng& rng) {
        Block b;
        b.b1 = make_cbr(name + "/b1", in, c, 1, 1, rng);
        b.b3a = make_cbr(name + "/b3a", in, c / 2, 1, 1, rng);
        b.b3b = make_cbr(name + "/b3b", c / 2, c, 3, 1, rng);
        b.b5a = make_cbr(name + "/b5a", in, c / 4, 1, 1, rng);
        b.b5b = make_cbr(name + "/b5b", c / 4, c / 2, 5, 1, rng);
        b.bp = make_cbr(name + "/bp", in, c / 2, 1, 1, rng);
        return b;
    }

    ClassifierConfig config_;
    nn::ParamStore<T> params_;
    Cbr stem_;
    std::vector<Cbr> layers_;
    std::vector<Block> blocks_;
    nn::Linear<T> head_;
    int features_ = 0;
};

/// Mean over batch and labels of w(t) * BCE(p, t), with w(t) = t*w_pos +
/// (1-t)*w_neg and p clamped into [1e-7, 1-1e-7]. `probs` and `targets` are
/// (batch, 4).
template <typename T>
nn::Var<T> weighted_bce_loss(const nn::Var<T>& probs, const nn::Var<T>& targets, const ClassWeights& weights) {
    require(probs.shape() == targets.shape() && probs.shape().size() == 2 && probs.dim(1) == kNumLabels,
            "weighted_bce_loss: expected matching (batch, 4) shapes, got ", nn::shape_str(probs.shape()), " and ",
            nn::shape_str(targets.shape()));
    const auto& pv = probs.value();
    const auto& tv = targets.value();
    for (std::size_t i = 0; i < pv.size(); ++i)
        if (!std::isfinite(static_cast<double>(pv[i])) || !std::isfinite(static_cast<double>(tv[i])))
            throw NumericError("weighted_bce_loss: non-finite input");
    const T lo = static_cast<T>(nn::kProbClamp), hi = T(1) - static_cast<T>(nn::kProbClamp);
    const std::size_t m = pv.size();
    std::vector<T> w(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto& lw = weights.weights[i % kNumLabels];
        w[i] = static_cast<T>(tv[i] * lw.pos + (1.0 - tv[i]) * lw.neg);
    }
    T acc = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const T pc = std::clamp(pv[i], lo, hi);
        const T t = tv[i];
        acc -= w[i] * (t * std::log(pc) + (T(1) - t) * std::log(T(1) - pc));
    }
    const T norm = T(1) / static_cast<T>(m);
    return nn::Var<T>::make(nn::Tensor<T>({1}, std::vector<T>{acc * norm}), {probs}, [=](nn::Node<T>& n) {
        if (auto* g = nn::parent_grad(n, 0)) {
            const auto& p = n.parents[0]->value;
            const T s = n.grad[0] * norm;
            for (std::size_t i = 0; i < m; ++i) {
                if (p[i] < lo || p[i] > hi) continue;
                (*g)[i] += s * w[i] * (-tv[i] / p[i] + (T(1) - tv[i]) / (T(1) - p[i]));
            }
        }
    });
}

/// Trained classifier plus its training metadata. Parameters are float.
struct ReadabilityClassifier {
    ReadabilityNet<float> net;
    std::uint64_t seed = 0;
    int epochs_run = 0;

    ReadabilityClassifier(const ClassifierConfig& config, std::uint64_t seed_)
        : net(config, seed_), seed(seed_) {}

    const ClassifierConfig& config() const { return net.config(); }
};

/// Parameters as arrays `readability/<name>`.
Checkpoint to_checkpoint(const ReadabilityClassifier& model);
/// Rebuilds a classifier for `config` from a checkpoint written by
/// to_checkpoint; a missing or mis-shaped array is a CompatibilityError.
ReadabilityClassifier classifier_from_checkpoint(const Checkpoint& ckpt, const ClassifierConfig& config);

/// Probabilities for raw images (preprocessed to the model's input size).
std::vector<std::array<double, kNumLabels>> predict_proba(const ReadabilityClassifier& model,
                                                          const std::vector<Image>& images, int batch_size = 32);
ReadabilityLabels predict_labels(const ReadabilityClassifier& model, const Image& image);

/// Labels decided at probability >= 0.5.
ReadabilityLabels threshold_labels(const std::array<double, kNumLabels>& probs);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0;
    double val_loss = 0;  // NaN when there is no validation set
};

struct ReadabilityTraining {
    ReadabilityClassifier model;
    std::vector<EpochStats> history;
};

/// RMSprop training with per-label class weights. `train` / `val` index
/// into `corpus`. Labels come from each sample's stored labels.
ReadabilityTraining train_readability(const ClassifierConfig& config, const std::vector<FundusSample>& corpus,
                                      const std::vector<int>& train, const std::vector<int>& val,
                                      std::uint64_t seed);

}  // namespace rr
