// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include "rr/readability/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rr/nn/optim.hpp"

namespace rr {

std::string to_string(ClassifierBase base) {
    return base == ClassifierBase::plain_cnn ? "plain_cnn" : "inception_small";
}

ClassifierBase classifier_base_from_string(const std::string& name) {
    if (name == "inception_small") return ClassifierBase::inception_small;
    if (name == "plain_cnn") return ClassifierBase::plain_cnn;
    throw ConfigError("unknown classifier base '" + name + "'");
}

void ClassifierConfig::validate() const {
    require<ConfigError>(input_size >= 8, "classifier input_size must be >= 8, got ", input_size);
    require<ConfigError>(channels == 3, "classifier channels must be 3");
    require<ConfigError>(learning_rate > 0.0, "classifier learning_rate must be positive");
    require<ConfigError>(optimizer == "rmsprop", "classifier optimizer must be 'rmsprop', got '", optimizer, "'");
    require<ConfigError>(epochs >= 1 && batch_size >= 1, "classifier epochs and batch_size must be positive");
    require<ConfigError>(width >= 4, "classifier width must be >= 4");
    require<ConfigError>(augment.flip_prob >= 0.0 && augment.flip_prob <= 1.0, "flip_prob must lie in [0, 1]");
    require<ConfigError>(augment.brightness_lo > 0.0 && augment.brightness_lo <= augment.brightness_hi &&
                             augment.contrast_lo >= 0.0 && augment.contrast_lo <= augment.contrast_hi,
                         "invalid augmentation ranges");
}

Checkpoint to_checkpoint(const ReadabilityClassifier& model) {
    Checkpoint ck;
    store_params(ck, model.net.params(), "readability/");
    return ck;
}

ReadabilityClassifier classifier_from_checkpoint(const Checkpoint& ckpt, const ClassifierConfig& config) {
    ReadabilityClassifier model(config, 0);
    load_params(ckpt, model.net.params(), "readability/");
    return model;
}

ReadabilityLabels threshold_labels(const std::array<double, kNumLabels>& probs) {
    ReadabilityLabels out;
    for (int k = 0; k < kNumLabels; ++k) out.set(k, probs[static_cast<std::size_t>(k)] >= 0.5);
    return out;
}

std::vector<std::array<double, kNumLabels>> predict_proba(const ReadabilityClassifier& model,
                                                          const std::vector<Image>& images, int batch_size) {
    nn::NoGradGuard guard;
    const int size = model.config().input_size;
    std::vector<std::array<double, kNumLabels>> out;
    out.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(images.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<Image> prepped;
        for (std::size_t i = start; i < end; ++i) prepped.push_back(preprocess(images[i], size));
        std::vector<const Image*> ptrs;
        for (const auto& im : prepped) ptrs.push_back(&im);
        const auto probs = model.net.forward(nn::Var<float>(to_tensor<float>(ptrs)));
        for (std::size_t i = 0; i < ptrs.size(); ++i) {
            std::array<double, kNumLabels> row{};
            for (int k = 0; k < kNumLabels; ++k) row[static_cast<std::size_t>(k)] = probs.value()[i * kNumLabels + k];
            out.push_back(row);
        }
    }
    return out;
}

ReadabilityLabels predict_labels(const ReadabilityClassifier& model, const Image& image) {
    return threshold_labels(predict_proba(model, {image}).front());
}

namespace {

nn::Tensor<float> label_tensor(const std::vector<const ReadabilityLabels*>& labels) {
    nn::Tensor<float> t({static_cast<int>(labels.size()), kNumLabels});
    for (std::size_t i = 0; i < labels.size(); ++i)
        for (int k = 0; k < kNumLabels; ++k) t[i * kNumLabels + k] = labels[i]->get(k) ? 1.0f : 0.0f;
    return t;
}

double dataset_loss(const ReadabilityClassifier& model, const std::vector<Image>& images,
                    const std::vector<const ReadabilityLabels*>& labels, const ClassWeights& weights, int batch) {
    nn::NoGradGuard guard;
    double total = 0;
    for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch)) {
        const std::size_t end = std::min(images.size(), start + static_cast<std::size_t>(batch));
        std::vector<const Image*> ptrs;
        std::vector<const ReadabilityLabels*> lab;
        for (std::size_t i = start; i < end; ++i) {
            ptrs.push_back(&images[i]);
            lab.push_back(labels[i]);
        }
        const auto probs = model.net.forward(nn::Var<float>(to_tensor<float>(ptrs)));
        const auto loss = weighted_bce_loss(probs, nn::Var<float>(label_tensor(lab)), weights);
        total += loss.item() * static_cast<double>(ptrs.size());
    }
    return total / static_cast<double>(images.size());
}

}  // namespace

ReadabilityTraining train_readability(const ClassifierConfig& config, const std::vector<FundusSample>& corpus,
                                      const std::vector<int>& train, const std::vector<int>& val,
                                      std::uint64_t seed) {
    config.validate();
    require(!train.empty(), "train_readability: empty training split");
    auto check_index = [&](int i) {
        require(i >= 0 && static_cast<std::size_t>(i) < corpus.size(), "train_readability: index ", i,
                " out of range");
    };
    std::vector<Image> train_images, val_images;
    std::vector<const ReadabilityLabels*> train_labels, val_labels;
    for (int i : train) {
        check_index(i);
        train_images.push_back(preprocess(corpus[static_cast<std::size_t>(i)].image, config.input_size));
        train_labels.push_back(&corpus[static_cast<std::size_t>(i)].labels);
    }
    for (int i : val) {
        check_index(i);
        val_images.push_back(preprocess(corpus[static_cast<std::size_t>(i)].image, config.input_size));
        val_labels.push_back(&corpus[static_cast<std::size_t>(i)].labels);
    }

    ClassWeights weights;
    if (config.class_weights) {
        weights = *config.class_weights;
    } else {
        std::vector<ReadabilityLabels> labs;
        for (const auto* l : train_labels) labs.push_back(*l);
        weights = compute_class_weights(labs);
    }

    ReadabilityTraining result{ReadabilityClassifier(config, seed), {}};
    auto& model = result.model;
    nn::RmsProp<float> opt(model.net.params(), {config.learning_rate, 0.9, 1e-7});
    Rng shuffle_rng(derive_seed(seed, "readability/shuffle"));
    Rng augment_rng(derive_seed(seed, "readability/augment"));

    std::vector<std::size_t> order(train_images.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto bs = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i) - 1))]);
        double total = 0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            std::vector<Image> batch;
            std::vector<const ReadabilityLabels*> lab;
            for (std::size_t j = start; j < end; ++j) {
                batch.push_back(augment(train_images[order[j]], augment_rng, config.augment));
                lab.push_back(train_labels[order[j]]);
            }
            std::vector<const Image*> ptrs;
            for (const auto& im : batch) ptrs.push_back(&im);
            nn::Var<float> loss;
            try {
                const auto probs = model.net.forward(nn::Var<float>(to_tensor<float>(ptrs)));
                loss = weighted_bce_loss(probs, nn::Var<float>(label_tensor(lab)), weights);
            } catch (const NumericError& e) {
                throw TrainingError("readability training diverged at epoch " + std::to_string(epoch) + ": " +
                                    e.what());
            }
            if (!std::isfinite(loss.item()))
                throw TrainingError("readability training diverged at epoch " + std::to_string(epoch));
            loss.backward();
            opt.step();
            total += loss.item() * static_cast<double>(end - start);
        }
        EpochStats st;
        st.epoch = epoch;
        st.train_loss = total / static_cast<double>(order.size());
        st.val_loss = val_images.empty() ? std::numeric_limits<double>::quiet_NaN()
                                         : dataset_loss(model, val_images, val_labels, weights, config.batch_size);
        result.history.push_back(st);
        model.epochs_run = epoch;
    }
    return result;
}

}  // namespace rr
