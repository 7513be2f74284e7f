// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "rr/core/error.hpp"
#include "rr/core/rng.hpp"
#include "rr/nn/layers.hpp"
#include "rr/vae/vae.hpp"

namespace rr {

enum class Backbone { unet, unet_pp, resnet_unet, densenet_unet, vae };

inline constexpr std::array<Backbone, 5> kAllBackbones{Backbone::unet, Backbone::unet_pp, Backbone::resnet_unet,
                                                       Backbone::densenet_unet, Backbone::vae};

inline std::string to_string(Backbone b) {
    switch (b) {
        case Backbone::unet: return "unet";
        case Backbone::unet_pp: return "unet_pp";
        case Backbone::resnet_unet: return "resnet_unet";
        case Backbone::densenet_unet: return "densenet_unet";
        case Backbone::vae: return "vae";
    }
    return "?";
}

inline Backbone backbone_from_string(const std::string& s) {
    for (Backbone b : kAllBackbones)
        if (to_string(b) == s) return b;
    throw ConfigError("unknown backbone '" + s + "' (expected unet, unet_pp, resnet_unet, densenet_unet or vae)");
}

/// What the network output means: the noise itself, or a clean-image estimate
/// from which the noise is derived.
enum class Parameterization { eps, x0 };

inline std::string to_string(Parameterization p) { return p == Parameterization::eps ? "eps" : "x0"; }

inline Parameterization parameterization_from_string(const std::string& s) {
    if (s == "eps") return Parameterization::eps;
    if (s == "x0") return Parameterization::x0;
    throw ConfigError("unknown parameterization '" + s + "' (expected eps or x0)");
}

struct DenoiserConfig {
    Backbone backbone = Backbone::unet;
    int image_size = 64;
    int in_channels = 3;
    int out_channels = 3;
    /// Channels of the first level; deeper levels use 2x and 4x.
    int width = 32;
    int time_dim = 64;
    /// Encoder channel plan and latent size of the vae trunk.
    std::array<int, 3> vae_channels{32, 64, 128};
    int latent_dim = 128;

    void validate() const {
        if (image_size < 8 || image_size % 8 != 0)
            throw ConfigError("image_size must be a positive multiple of 8, got " + std::to_string(image_size));
        if (width < 2 || width % 2 != 0) throw ConfigError("denoiser width must be an even number >= 2");
        if (time_dim < 2 || time_dim % 2 != 0) throw ConfigError("time_dim must be an even number >= 2");
        if (in_channels < 1 || out_channels < 1) throw ConfigError("denoiser channel counts must be >= 1");
    }
};

template <typename T>
struct DenoiserOutput {
    nn::Var<T> out;  // [N, out_channels, H, W]
    // Latent statistics, set for the vae trunk only.
    nn::Var<T> mu, log_var;
};

namespace detail {

enum class BlockKind { plain, residual, dense };

/// Two 3x3 convolutions with group norm and SiLU. The timestep projection is
/// added after a normalization, never before one: a group norm with one
/// channel per group would otherwise cancel a per-channel shift exactly.
template <typename T>
class Block {
public:
    Block() = default;
    Block(nn::ParamStore<T>& ps, const std::string& name, BlockKind kind, int in, int out, int time_dim, Rng& rng)
        : kind_(kind) {
        time_ = nn::Linear<T>(ps, name + "/time", time_dim, kind == BlockKind::dense ? in : out, rng);
        switch (kind) {
            case BlockKind::plain:
                c1_ = nn::Conv2d<T>(ps, name + "/conv1", in, out, 3, 1, 1, rng, 1, false);
                n1_ = nn::GroupNorm<T>(ps, name + "/norm1", out, nn::norm_groups(out), rng);
                c2_ = nn::Conv2d<T>(ps, name + "/conv2", out, out, 3, 1, 1, rng, 1, false);
                n2_ = nn::GroupNorm<T>(ps, name + "/norm2", out, nn::norm_groups(out), rng);
                break;
            case BlockKind::residual:
                n1_ = nn::GroupNorm<T>(ps, name + "/norm1", in, nn::norm_groups(in), rng);
                c1_ = nn::Conv2d<T>(ps, name + "/conv1", in, out, 3, 1, 1, rng, 1, false);
                n2_ = nn::GroupNorm<T>(ps, name + "/norm2", out, nn::norm_groups(out), rng);
                c2_ = nn::Conv2d<T>(ps, name + "/conv2", out, out, 3, 1, 1, rng);
                if (in != out) skip_ = nn::Conv2d<T>(ps, name + "/skip", in, out, 1, 1, 0, rng);
                break;
            case BlockKind::dense: {
                // Two densely connected layers with growth out/2, then a 1x1 transition.
                const int g = out / 2;
                n1_ = nn::GroupNorm<T>(ps, name + "/norm1", in, nn::norm_groups(in), rng);
                c1_ = nn::Conv2d<T>(ps, name + "/conv1", in, g, 3, 1, 1, rng);
                n2_ = nn::GroupNorm<T>(ps, name + "/norm2", in + g, nn::norm_groups(in + g), rng);
                c2_ = nn::Conv2d<T>(ps, name + "/conv2", in + g, g, 3, 1, 1, rng);
                skip_ = nn::Conv2d<T>(ps, name + "/transition", in + 2 * g, out, 1, 1, 0, rng);
                break;
            }
        }
    }

    nn::Var<T> operator()(const nn::Var<T>& x, const nn::Var<T>& temb) const {
        const nn::Var<T> tp = time_(temb);
        switch (kind_) {
            case BlockKind::plain: {
                nn::Var<T> h = nn::silu(nn::add_nc(n1_(c1_(x)), tp));
                return nn::silu(n2_(c2_(h)));
            }
            case BlockKind::residual: {
                nn::Var<T> h = c1_(nn::silu(n1_(x)));
                h = c2_(nn::silu(nn::add_nc(n2_(h), tp)));
                return nn::add(h, skip_.weight.defined() ? skip_(x) : x);
            }
            case BlockKind::dense: {
                const nn::Var<T> y1 = c1_(nn::silu(nn::add_nc(n1_(x), tp)));
                const nn::Var<T> cat1 = nn::concat<T>({x, y1});
                const nn::Var<T> y2 = c2_(nn::silu(n2_(cat1)));
                return skip_(nn::concat<T>({cat1, y2}));
            }
        }
        return x;
    }

private:
    BlockKind kind_ = BlockKind::plain;
    nn::Linear<T> time_;
    nn::Conv2d<T> c1_, c2_, skip_;
    nn::GroupNorm<T> n1_, n2_;
};

}  // namespace detail

/// Noise (or clean-image) predictor with a sinusoidal timestep embedding fed
/// to every stage.
///
/// unet, resnet_unet and densenet_unet share a three-level encoder/decoder
/// with skip concatenation and differ in their block type. unet_pp adds the
/// nested intermediate nodes of a U-Net++. vae runs the time-conditioned vae
/// trunk (encoder, reparameterized latent, decoder).
template <typename T>
class Denoiser {
public:
    Denoiser(nn::ParamStore<T>& ps, const DenoiserConfig& cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        const int w = cfg.width, td = cfg.time_dim;
        time1_ = nn::Linear<T>(ps, "denoiser/time_mlp1", td, td, rng);
        time2_ = nn::Linear<T>(ps, "denoiser/time_mlp2", td, td, rng);
        if (cfg.backbone == Backbone::vae) {
            VaeConfig vc;
            vc.image_size = cfg.image_size;
            vc.in_channels = cfg.in_channels;
            vc.out_channels = cfg.out_channels;
            vc.channels = cfg.vae_channels;
            vc.latent_dim = cfg.latent_dim;
            vae_ = std::make_unique<Vae<T>>(ps, vc, rng, "vae/", td);
            return;
        }
        using detail::Block;
        using detail::BlockKind;
        const BlockKind kind = cfg.backbone == Backbone::resnet_unet     ? BlockKind::residual
                               : cfg.backbone == Backbone::densenet_unet ? BlockKind::dense
                                                                          : BlockKind::plain;
        const std::string p = "denoiser/";
        stem_ = nn::Conv2d<T>(ps, p + "stem", cfg.in_channels, w, 3, 1, 1, rng);
        x00_ = Block<T>(ps, p + "x00", kind, w, w, td, rng);
        down0_ = nn::Conv2d<T>(ps, p + "down0", w, w, 3, 2, 1, rng);
        x10_ = Block<T>(ps, p + "x10", kind, w, 2 * w, td, rng);
        down1_ = nn::Conv2d<T>(ps, p + "down1", 2 * w, 2 * w, 3, 2, 1, rng);
        x20_ = Block<T>(ps, p + "x20", kind, 2 * w, 4 * w, td, rng);
        up1_ = nn::ConvTranspose2d<T>(ps, p + "up1", 4 * w, 2 * w, 4, 2, 1, rng);
        x11_ = Block<T>(ps, p + "x11", kind, 4 * w, 2 * w, td, rng);
        up0_ = nn::ConvTranspose2d<T>(ps, p + "up0", 2 * w, w, 4, 2, 1, rng);
        if (cfg.backbone == Backbone::unet_pp) {
            up10_ = nn::ConvTranspose2d<T>(ps, p + "up10", 2 * w, w, 4, 2, 1, rng);
            x01_ = Block<T>(ps, p + "x01", kind, 2 * w, w, td, rng);
            x02_ = Block<T>(ps, p + "x02", kind, 3 * w, w, td, rng);
        } else {
            x02_ = Block<T>(ps, p + "x02", kind, 2 * w, w, td, rng);
        }
        head_ = nn::Conv2d<T>(ps, p + "head", w, cfg.out_channels, 3, 1, 1, rng, 1, true, nn::Init::zeros);
    }

    const DenoiserConfig& config() const { return cfg_; }

    /// x: [N, in_channels, S, S]; one timestep per sample. `rng` draws the
    /// latent noise of the vae trunk; when null the latent mean is used.
    DenoiserOutput<T> forward(const nn::Var<T>& x, const std::vector<int>& t, Rng* rng = nullptr) const {
        require(x.value().ndim() == 4 && x.dim(1) == cfg_.in_channels && x.dim(2) == cfg_.image_size &&
                    x.dim(3) == cfg_.image_size,
                "denoiser: expected [N, ", cfg_.in_channels, ", ", cfg_.image_size, ", ", cfg_.image_size, "], got ",
                nn::shape_str(x.shape()));
        require(static_cast<int>(t.size()) == x.dim(0), "denoiser: need one timestep per sample");
        const nn::Var<T> temb_raw(nn::timestep_embedding<T>(t, cfg_.time_dim));
        const nn::Var<T> temb = nn::silu(time2_(nn::silu(time1_(temb_raw))));
        if (vae_) {
            auto out = vae_->forward(x, rng, temb);
            return {out.x_hat, out.latent.mu, out.latent.log_var};
        }
        const nn::Var<T> a0 = x00_(stem_(x), temb);
        const nn::Var<T> a1 = x10_(down0_(a0), temb);
        const nn::Var<T> a2 = x20_(down1_(a1), temb);
        const nn::Var<T> b1 = x11_(nn::concat<T>({a1, up1_(a2)}), temb);
        nn::Var<T> b0;
        if (cfg_.backbone == Backbone::unet_pp) {
            const nn::Var<T> m0 = x01_(nn::concat<T>({a0, up10_(a1)}), temb);
            b0 = x02_(nn::concat<T>({a0, m0, up0_(b1)}), temb);
        } else {
            b0 = x02_(nn::concat<T>({a0, up0_(b1)}), temb);
        }
        return {head_(b0), {}, {}};
    }

    /// True when the output passes through a sigmoid (vae trunk).
    bool bounded_output() const { return static_cast<bool>(vae_); }

private:
    DenoiserConfig cfg_;
    nn::Linear<T> time1_, time2_;
    std::unique_ptr<Vae<T>> vae_;
    nn::Conv2d<T> stem_, down0_, down1_, head_;
    nn::ConvTranspose2d<T> up1_, up0_, up10_;
    detail::Block<T> x00_, x10_, x20_, x11_, x01_, x02_;
};

}  // namespace rr
