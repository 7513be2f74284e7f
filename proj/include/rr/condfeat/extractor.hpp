// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "rr/core/error.hpp"
#include "rr/core/rng.hpp"
#include "rr/nn/layers.hpp"

namespace rr {

enum class ExtractorKind { self_attention_only, alexnet_like, res18, res34, res50, vgg_like, resnext_like, mobilenet_like };

inline constexpr std::array<ExtractorKind, 8> kAllExtractors{
    ExtractorKind::self_attention_only, ExtractorKind::alexnet_like, ExtractorKind::res18,
    ExtractorKind::res34,               ExtractorKind::res50,        ExtractorKind::vgg_like,
    ExtractorKind::resnext_like,        ExtractorKind::mobilenet_like};

inline std::string to_string(ExtractorKind k) {
    switch (k) {
        case ExtractorKind::self_attention_only: return "self_attention_only";
        case ExtractorKind::alexnet_like: return "alexnet_like";
        case ExtractorKind::res18: return "res18";
        case ExtractorKind::res34: return "res34";
        case ExtractorKind::res50: return "res50";
        case ExtractorKind::vgg_like: return "vgg_like";
        case ExtractorKind::resnext_like: return "resnext_like";
        case ExtractorKind::mobilenet_like: return "mobilenet_like";
    }
    return "?";
}

inline ExtractorKind extractor_from_string(const std::string& s) {
    for (ExtractorKind k : kAllExtractors)
        if (to_string(k) == s) return k;
    throw ConfigError("unknown feature extractor '" + s + "'");
}

struct AttentionConfig {
    int embed_dim = 256;
    int heads = 8;

    void validate() const {
        if (embed_dim < 1 || heads < 1) throw ConfigError("attention embed_dim and heads must be >= 1");
        if (embed_dim % heads != 0)
            throw ConfigError("attention embed_dim " + std::to_string(embed_dim) + " is not divisible by " +
                              std::to_string(heads) + " heads");
    }
};

/// Every layout is three stages, each halving the resolution, with channels
/// width, 2*width, 4*width. Features are tapped after `tap_stage`, so the map
/// is input_size / 2^tap_stage on a side with width * 2^(tap_stage-1) channels.
struct ExtractorConfig {
    ExtractorKind kind = ExtractorKind::res34;
    int input_size = 64;
    int width = 64;
    int tap_stage = 3;
    /// res34 only: one basic block per stage (the 10-layer layout) instead of 3, 4, 6.
    bool reduced = false;
    AttentionConfig attention{};
    /// Keep extractor parameters fixed during restorer training.
    bool freeze = true;
    /// Readable images pooled per step when the extractor is trained jointly.
    int joint_sources = 8;

    int stride() const { return 1 << tap_stage; }
    int out_size() const { return input_size / stride(); }
    int out_channels() const { return width << (tap_stage - 1); }

    void validate() const {
        attention.validate();
        if (tap_stage < 1 || tap_stage > 3) throw ConfigError("extractor.tap_stage must be 1, 2 or 3");
        if (width < 8 || width % 8 != 0) throw ConfigError("extractor.width must be a positive multiple of 8");
        if (input_size < stride() || input_size % stride() != 0)
            throw ConfigError("extractor input size " + std::to_string(input_size) + " is not a multiple of stride " +
                              std::to_string(stride()));
        if (joint_sources < 1) throw ConfigError("extractor.joint_sources must be >= 1");
    }
};

namespace detail {

template <typename T>
using Stage = std::vector<std::function<nn::Var<T>(const nn::Var<T>&)>>;

template <typename T>
struct ConvNormRelu {
    nn::Conv2d<T> conv;
    nn::GroupNorm<T> norm;
    bool act = true;
    nn::Var<T> operator()(const nn::Var<T>& x) const {
        nn::Var<T> h = norm(conv(x));
        return act ? nn::relu(h) : h;
    }
};

template <typename T>
ConvNormRelu<T> cnr(nn::ParamStore<T>& ps, const std::string& name, int in, int out, int k, int stride, Rng& rng,
                    int groups = 1, bool act = true) {
    return {nn::Conv2d<T>(ps, name + "/conv", in, out, k, stride, k / 2, rng, groups, false),
            nn::GroupNorm<T>(ps, name + "/norm", out, nn::norm_groups(out), rng), act};
}

/// Residual block: basic (two 3x3) or bottleneck (1x1, 3x3 grouped, 1x1).
template <typename T>
struct ResBlock {
    std::vector<ConvNormRelu<T>> body;
    ConvNormRelu<T> proj;
    bool has_proj = false;
    nn::Var<T> operator()(const nn::Var<T>& x) const {
        nn::Var<T> h = x;
        for (const auto& l : body) h = l(h);
        return nn::relu(nn::add(h, has_proj ? proj(x) : x));
    }
};

template <typename T>
ResBlock<T> basic_block(nn::ParamStore<T>& ps, const std::string& name, int in, int out, int stride, Rng& rng) {
    ResBlock<T> b;
    b.body.push_back(cnr(ps, name + "/a", in, out, 3, stride, rng));
    b.body.push_back(cnr(ps, name + "/b", out, out, 3, 1, rng, 1, false));
    if (stride != 1 || in != out) {
        b.proj = cnr(ps, name + "/proj", in, out, 1, stride, rng, 1, false);
        b.has_proj = true;
    }
    return b;
}

template <typename T>
ResBlock<T> bottleneck_block(nn::ParamStore<T>& ps, const std::string& name, int in, int out, int mid, int stride,
                             int groups, Rng& rng) {
    ResBlock<T> b;
    b.body.push_back(cnr(ps, name + "/a", in, mid, 1, 1, rng));
    b.body.push_back(cnr(ps, name + "/b", mid, mid, 3, stride, rng, groups));
    b.body.push_back(cnr(ps, name + "/c", mid, out, 1, 1, rng, 1, false));
    if (stride != 1 || in != out) {
        b.proj = cnr(ps, name + "/proj", in, out, 1, stride, rng, 1, false);
        b.has_proj = true;
    }
    return b;
}

/// Depthwise 3x3 then pointwise 1x1, each with norm and ReLU.
template <typename T>
struct SeparableBlock {
    ConvNormRelu<T> dw, pw;
    nn::Var<T> operator()(const nn::Var<T>& x) const { return pw(dw(x)); }
};

}  // namespace detail

/// Multi-head scaled dot-product self-attention over the spatial positions of
/// a [N, D, h, w] map, with the attention output added back to the input.
template <typename T>
class SelfAttention {
public:
    SelfAttention() = default;
    SelfAttention(nn::ParamStore<T>& ps, const std::string& name, const AttentionConfig& cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        const int d = cfg.embed_dim;
        q_ = nn::Linear<T>(ps, name + "/q", d, d, rng);
        k_ = nn::Linear<T>(ps, name + "/k", d, d, rng);
        v_ = nn::Linear<T>(ps, name + "/v", d, d, rng);
        o_ = nn::Linear<T>(ps, name + "/out", d, d, rng);
    }

    const AttentionConfig& config() const { return cfg_; }
    nn::Linear<T>& q() { return q_; }
    nn::Linear<T>& k() { return k_; }
    nn::Linear<T>& v() { return v_; }
    nn::Linear<T>& out() { return o_; }

    /// Tokens [L, D] -> enhanced tokens [L, D]. When `weights` is non-null the
    /// per-head [L, L] attention matrices are appended to it.
    nn::Var<T> tokens(const nn::Var<T>& x, std::vector<nn::Tensor<T>>* weights = nullptr) const {
        const int d = cfg_.embed_dim, dh = d / cfg_.heads;
        require(x.value().ndim() == 2 && x.dim(1) == d, "self_attention: expected [tokens, ", d, "], got ",
                nn::shape_str(x.shape()));
        const nn::Var<T> q = q_(x), k = k_(x), v = v_(x);
        const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
        std::vector<nn::Var<T>> heads;
        for (int h = 0; h < cfg_.heads; ++h) {
            const nn::Var<T> qh = nn::slice(q, 1, h * dh, dh), kh = nn::slice(k, 1, h * dh, dh),
                             vh = nn::slice(v, 1, h * dh, dh);
            const nn::Var<T> a = nn::softmax_rows(nn::scale(nn::matmul(qh, nn::transpose2d(kh)), scale));
            if (weights) weights->push_back(a.value());
            heads.push_back(nn::matmul(a, vh));
        }
        return nn::add(x, o_(nn::concat<T>(heads, 1)));
    }

    /// [N, D, h, w] -> [N, D, h, w].
    nn::Var<T> operator()(const nn::Var<T>& f, std::vector<nn::Tensor<T>>* weights = nullptr) const {
        const int d = cfg_.embed_dim;
        if (f.value().ndim() != 4 || f.dim(1) != d)
            throw ArgumentError("self_attention: expected [N, " + std::to_string(d) + ", h, w], got " +
                                nn::shape_str(f.shape()));
        const int hw = f.dim(2) * f.dim(3);
        std::vector<nn::Var<T>> outs;
        for (int n = 0; n < f.dim(0); ++n) {
            const nn::Var<T> tok = nn::transpose2d(nn::reshape(nn::slice(f, 0, n, 1), {d, hw}));
            outs.push_back(nn::reshape(nn::transpose2d(tokens(tok, weights)), {1, d, f.dim(2), f.dim(3)}));
        }
        return outs.size() == 1 ? outs[0] : nn::concat<T>(outs, 0);
    }

private:
    AttentionConfig cfg_;
    nn::Linear<T> q_, k_, v_, o_;
};

/// 1x1 convolution to the embedding width, per-channel standardisation over
/// spatial positions (eps 1e-5), ReLU.
template <typename T>
class ChannelCompressor {
public:
    ChannelCompressor() = default;
    ChannelCompressor(nn::ParamStore<T>& ps, const std::string& name, int in, int embed, Rng& rng) {
        if (in < embed)
            throw ArgumentError("compress_channels: " + std::to_string(in) + " input channels < embedding width " +
                                std::to_string(embed));
        conv_ = nn::Conv2d<T>(ps, name, in, embed, 1, 1, 0, rng);
    }
    nn::Conv2d<T>& conv() { return conv_; }

    nn::Var<T> operator()(const nn::Var<T>& f) const {
        if (f.value().ndim() != 4 || f.dim(1) != conv_.weight.dim(1))
            throw ArgumentError("compress_channels: expected " + std::to_string(conv_.weight.dim(1)) +
                                " channels, got " + nn::shape_str(f.shape()));
        const nn::Var<T> h = conv_(f);
        return nn::relu(nn::group_norm(h, h.dim(1), T(1e-5)));
    }

private:
    nn::Conv2d<T> conv_;
};

/// Backbone, channel compression and self-attention.
template <typename T>
class FeatureExtractor {
public:
    FeatureExtractor(nn::ParamStore<T>& ps, const ExtractorConfig& cfg, Rng& rng,
                     const std::string& prefix = "extractor/")
        : cfg_(cfg) {
        cfg_.validate();
        build_backbone(ps, prefix, rng);
        compress_ = ChannelCompressor<T>(ps, prefix + "compress", cfg_.out_channels(), cfg_.attention.embed_dim, rng);
        attention_ = SelfAttention<T>(ps, prefix + "attention", cfg_.attention, rng);
    }

    const ExtractorConfig& config() const { return cfg_; }
    ChannelCompressor<T>& compressor() { return compress_; }
    SelfAttention<T>& attention() { return attention_; }

    /// [N, 3, S, S] -> [N, out_channels, S / stride, S / stride].
    nn::Var<T> backbone(const nn::Var<T>& x) const {
        if (x.value().ndim() != 4 || x.dim(1) != 3 || x.dim(2) != cfg_.input_size || x.dim(3) != cfg_.input_size)
            throw ArgumentError("feature extractor: expected [N, 3, " + std::to_string(cfg_.input_size) + ", " +
                                std::to_string(cfg_.input_size) + "], got " + nn::shape_str(x.shape()));
        nn::Var<T> h = x;
        for (int s = 0; s < cfg_.tap_stage; ++s)
            for (const auto& op : stages_[static_cast<std::size_t>(s)]) h = op(h);
        return h;
    }

    /// Attention-enhanced, compressed maps [N, embed_dim, s, s].
    nn::Var<T> operator()(const nn::Var<T>& x) const { return attention_(compress_(backbone(x))); }

private:
    void build_backbone(nn::ParamStore<T>& ps, const std::string& p, Rng& rng) {
        using namespace detail;
        const int w = cfg_.width;
        const std::array<int, 3> ch{w, 2 * w, 4 * w};
        auto add = [this](int s, auto layer) { stages_[static_cast<std::size_t>(s)].push_back(layer); };
        switch (cfg_.kind) {
            case ExtractorKind::self_attention_only: {
                // A single patchifying convolution per tap depth.
                const int k = cfg_.stride();
                nn::Conv2d<T> patch(ps, p + "patch", 3, cfg_.out_channels(), k, k, 0, rng);
                add(cfg_.tap_stage - 1, [patch](const nn::Var<T>& x) { return nn::relu(patch(x)); });
                break;
            }
            case ExtractorKind::alexnet_like: {
                add(0, cnr(ps, p + "s0/conv0", 3, ch[0], 5, 2, rng));
                add(1, [](const nn::Var<T>& x) { return nn::max_pool2d(x, 3, 2, 1); });
                add(1, cnr(ps, p + "s1/conv0", ch[0], ch[1], 5, 1, rng));
                add(2, [](const nn::Var<T>& x) { return nn::max_pool2d(x, 3, 2, 1); });
                add(2, cnr(ps, p + "s2/conv0", ch[1], ch[2], 3, 1, rng));
                add(2, cnr(ps, p + "s2/conv1", ch[2], ch[2], 3, 1, rng));
                break;
            }
            case ExtractorKind::vgg_like: {
                const std::array<int, 3> reps{2, 2, 3};
                int in = 3;
                for (int s = 0; s < 3; ++s) {
                    for (int r = 0; r < reps[static_cast<std::size_t>(s)]; ++r) {
                        add(s, cnr(ps, p + "s" + std::to_string(s) + "/conv" + std::to_string(r), in,
                                   ch[static_cast<std::size_t>(s)], 3, 1, rng));
                        in = ch[static_cast<std::size_t>(s)];
                    }
                    add(s, [](const nn::Var<T>& x) { return nn::max_pool2d(x, 2, 2); });
                }
                break;
            }
            case ExtractorKind::res18:
            case ExtractorKind::res34:
            case ExtractorKind::res50:
            case ExtractorKind::resnext_like: {
                std::array<int, 3> blocks{2, 2, 2};
                if (cfg_.kind == ExtractorKind::res34 || cfg_.kind == ExtractorKind::res50) blocks = {3, 4, 6};
                if (cfg_.kind == ExtractorKind::res34 && cfg_.reduced) blocks = {1, 1, 1};
                const bool bottleneck = cfg_.kind == ExtractorKind::res50 || cfg_.kind == ExtractorKind::resnext_like;
                add(0, cnr(ps, p + "stem", 3, ch[0], 3, 2, rng));
                int in = ch[0];
                for (int s = 0; s < 3; ++s) {
                    const int out = ch[static_cast<std::size_t>(s)];
                    for (int b = 0; b < blocks[static_cast<std::size_t>(s)]; ++b) {
                        const int stride = (s > 0 && b == 0) ? 2 : 1;
                        const std::string name = p + "s" + std::to_string(s) + "/block" + std::to_string(b);
                        if (!bottleneck)
                            add(s, basic_block(ps, name, in, out, stride, rng));
                        else if (cfg_.kind == ExtractorKind::res50)
                            add(s, bottleneck_block(ps, name, in, out, out / 4, stride, 1, rng));
                        else
                            add(s, bottleneck_block(ps, name, in, out, out / 2, stride, nn::norm_groups(out / 2, 8), rng));
                        in = out;
                    }
                }
                break;
            }
            case ExtractorKind::mobilenet_like: {
                add(0, cnr(ps, p + "stem", 3, ch[0], 3, 2, rng));
                const std::array<int, 3> reps{1, 2, 3};
                int in = ch[0];
                for (int s = 0; s < 3; ++s) {
                    const int out = ch[static_cast<std::size_t>(s)];
                    for (int r = 0; r < reps[static_cast<std::size_t>(s)]; ++r) {
                        const int stride = (s > 0 && r == 0) ? 2 : 1;
                        const std::string name = p + "s" + std::to_string(s) + "/sep" + std::to_string(r);
                        add(s, SeparableBlock<T>{cnr(ps, name + "/dw", in, in, 3, stride, rng, in),
                                                 cnr(ps, name + "/pw", in, out, 1, 1, rng)});
                        in = out;
                    }
                }
                break;
            }
        }
    }

    ExtractorConfig cfg_;
    std::array<detail::Stage<T>, 3> stages_;
    ChannelCompressor<T> compress_;
    SelfAttention<T> attention_;
};

/// Pooled condition: the elementwise mean of per-image maps.
struct ConditionalFeature {
    nn::Tensor<float> map;  // [embed_dim, s, s]
    int n_sources = 0;
};

/// Mean of maps [D, h, w]. Maps are summed in a canonical (bytewise sorted)
/// order with double accumulation, so any permutation of the inputs gives a
/// bit-identical result.
ConditionalFeature pool_condition(std::vector<nn::Tensor<float>> maps);

/// Runs the extractor over every image (in chunks) and pools the maps.
template <typename T>
ConditionalFeature build_static_condition(const FeatureExtractor<T>& extractor, const std::vector<nn::Tensor<T>>& images,
                                          int chunk = 8) {
    if (images.empty()) throw ArgumentError("build_static_condition: no readable images");
    nn::NoGradGuard guard;
    std::vector<nn::Tensor<float>> maps;
    for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(chunk)) {
        const std::size_t end = std::min(images.size(), start + static_cast<std::size_t>(chunk));
        const nn::Shape s = images[start].shape();
        nn::Tensor<T> batch({static_cast<int>(end - start), s[0], s[1], s[2]});
        for (std::size_t i = start; i < end; ++i) {
            require(images[i].shape() == s, "build_static_condition: mixed image shapes");
            std::copy(images[i].data(), images[i].data() + images[i].size(), batch.data() + (i - start) * images[i].size());
        }
        const nn::Var<T> out = extractor(nn::Var<T>(std::move(batch)));
        const std::size_t per = out.size() / static_cast<std::size_t>(out.dim(0));
        for (int n = 0; n < out.dim(0); ++n) {
            nn::Tensor<float> m({out.dim(1), out.dim(2), out.dim(3)});
            for (std::size_t i = 0; i < per; ++i) m[i] = static_cast<float>(out.value()[n * per + i]);
            maps.push_back(std::move(m));
        }
    }
    return pool_condition(std::move(maps));
}

}  // namespace rr
