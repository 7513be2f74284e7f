// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <string>

#include "rr/core/rng.hpp"
#include "rr/nn/layers.hpp"

namespace rr {

struct VaeConfig {
    int image_size = 64;
    int in_channels = 3;
    int out_channels = 3;
    std::array<int, 3> channels{32, 64, 128};
    int latent_dim = 128;
    /// Per-element averages instead of sums in the reconstruction and KL terms.
    bool mean_reduction = false;
    double kl_weight = 1.0;

    void validate() const;
    /// Spatial size after the three stride-2 encoder layers.
    int bottleneck_size() const { return image_size / 8; }
};

inline void VaeConfig::validate() const {
    if (image_size < 8 || image_size % 8 != 0)
        throw ConfigError("vae.image_size must be a positive multiple of 8, got " + std::to_string(image_size));
    if (latent_dim < 1) throw ConfigError("vae.latent_dim must be >= 1");
    for (int c : channels)
        if (c < 1) throw ConfigError("vae.channels entries must be >= 1");
    if (in_channels < 1 || out_channels < 1) throw ConfigError("vae channel counts must be >= 1");
    if (!(kl_weight >= 0.0)) throw ConfigError("vae.kl_weight must be >= 0");
}

inline constexpr double kLogVarClamp = 20.0;

template <typename T>
struct LatentParams {
    nn::Var<T> mu;       // [N, latent]
    nn::Var<T> log_var;  // [N, latent], clamped to [-20, 20]
};

/// Three stride-2 convolutions into a Gaussian latent, then a dense layer and
/// three stride-2 transposed convolutions back to a sigmoid image.
///
/// When constructed with time_dim > 0, a projection of a timestep embedding is
/// added after every hidden layer; this is how the trunk serves as a denoiser.
template <typename T>
class Vae {
public:
    Vae(nn::ParamStore<T>& ps, const VaeConfig& cfg, Rng& rng, const std::string& prefix = "vae/", int time_dim = 0)
        : cfg_(cfg) {
        cfg_.validate();
        const auto& ch = cfg_.channels;
        const int b = cfg_.bottleneck_size();
        flat_ = ch[2] * b * b;
        enc_[0] = nn::Conv2d<T>(ps, prefix + "enc0", cfg_.in_channels, ch[0], 4, 2, 1, rng);
        enc_[1] = nn::Conv2d<T>(ps, prefix + "enc1", ch[0], ch[1], 4, 2, 1, rng);
        enc_[2] = nn::Conv2d<T>(ps, prefix + "enc2", ch[1], ch[2], 4, 2, 1, rng);
        fc_mu_ = nn::Linear<T>(ps, prefix + "fc_mu", flat_, cfg_.latent_dim, rng);
        fc_logvar_ = nn::Linear<T>(ps, prefix + "fc_logvar", flat_, cfg_.latent_dim, rng);
        fc_dec_ = nn::Linear<T>(ps, prefix + "fc_dec", cfg_.latent_dim, flat_, rng);
        dec_[0] = nn::ConvTranspose2d<T>(ps, prefix + "dec0", ch[2], ch[1], 4, 2, 1, rng);
        dec_[1] = nn::ConvTranspose2d<T>(ps, prefix + "dec1", ch[1], ch[0], 4, 2, 1, rng);
        dec_[2] = nn::ConvTranspose2d<T>(ps, prefix + "dec2", ch[0], cfg_.out_channels, 4, 2, 1, rng);
        if (time_dim > 0) {
            const std::array<int, 5> widths{ch[0], ch[1], ch[2], ch[1], ch[0]};
            for (std::size_t i = 0; i < widths.size(); ++i)
                time_proj_[i] = nn::Linear<T>(ps, prefix + "time" + std::to_string(i), time_dim, widths[i], rng);
            timed_ = true;
        }
    }

    const VaeConfig& config() const { return cfg_; }

    LatentParams<T> encode(const nn::Var<T>& x, const nn::Var<T>& temb = {}) const {
        require(x.value().ndim() == 4 && x.dim(1) == cfg_.in_channels && x.dim(2) == cfg_.image_size &&
                    x.dim(3) == cfg_.image_size,
                "vae encode: expected [N, ", cfg_.in_channels, ", ", cfg_.image_size, ", ", cfg_.image_size, "], got ",
                nn::shape_str(x.shape()));
        nn::Var<T> h = x;
        for (std::size_t i = 0; i < enc_.size(); ++i) h = hidden(enc_[i](h), i, temb);
        h = nn::reshape(h, {x.dim(0), flat_});
        const T lim = static_cast<T>(kLogVarClamp);
        return {fc_mu_(h), nn::clamp(fc_logvar_(h), -lim, lim)};
    }

    nn::Var<T> decode(const nn::Var<T>& z, const nn::Var<T>& temb = {}) const {
        require(z.value().ndim() == 2 && z.dim(1) == cfg_.latent_dim, "vae decode: expected [N, ", cfg_.latent_dim,
                "], got ", nn::shape_str(z.shape()));
        const int b = cfg_.bottleneck_size();
        nn::Var<T> h = nn::relu(fc_dec_(z));
        h = nn::reshape(h, {z.dim(0), cfg_.channels[2], b, b});
        h = hidden(dec_[0](h), 3, temb);
        h = hidden(dec_[1](h), 4, temb);
        return nn::sigmoid(dec_[2](h));
    }

    /// Encode, sample (or take the mean when rng is null) and decode.
    struct Output {
        nn::Var<T> x_hat;
        LatentParams<T> latent;
    };
    Output forward(const nn::Var<T>& x, Rng* rng, const nn::Var<T>& temb = {}) const;

    /// Zeroes the mean and log-variance heads.
    void zero_latent_heads() {
        for (auto* l : {&fc_mu_, &fc_logvar_}) {
            l->weight.mutable_value().fill(T(0));
            l->bias.mutable_value().fill(T(0));
        }
    }

    /// Zeroes the final transposed convolution.
    void zero_output_layer() {
        dec_[2].weight.mutable_value().fill(T(0));
        dec_[2].bias.mutable_value().fill(T(0));
    }

private:
    nn::Var<T> hidden(const nn::Var<T>& h, std::size_t i, const nn::Var<T>& temb) const {
        if (!timed_) return nn::relu(h);
        require(temb.defined(), "time-conditioned vae needs a timestep embedding");
        return nn::relu(nn::add_nc(h, time_proj_[i](temb)));
    }

    VaeConfig cfg_;
    int flat_ = 0;
    bool timed_ = false;
    std::array<nn::Conv2d<T>, 3> enc_;
    nn::Linear<T> fc_mu_, fc_logvar_, fc_dec_;
    std::array<nn::ConvTranspose2d<T>, 3> dec_;
    std::array<nn::Linear<T>, 5> time_proj_;
};

/// z = mu + eps * exp(log_var / 2).
template <typename T>
nn::Var<T> reparameterize(const LatentParams<T>& p, const nn::Var<T>& eps) {
    require(eps.shape() == p.mu.shape(), "reparameterize: eps shape ", nn::shape_str(eps.shape()), " vs mu ",
            nn::shape_str(p.mu.shape()));
    return nn::add(p.mu, nn::mul(eps, nn::exp(nn::scale(p.log_var, T(0.5)))));
}

template <typename T>
typename Vae<T>::Output Vae<T>::forward(const nn::Var<T>& x, Rng* rng, const nn::Var<T>& temb) const {
    LatentParams<T> lat = encode(x, temb);
    nn::Tensor<T> eps(lat.mu.shape());
    if (rng)
        for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = static_cast<T>(rng->normal());
    nn::Var<T> z = reparameterize(lat, nn::Var<T>(std::move(eps)));
    return {decode(z, temb), lat};
}

/// Non-negative binary cross-entropy with predictions clamped to [1e-7, 1-1e-7].
template <typename T>
nn::Var<T> bce_recon_loss(const nn::Var<T>& x_hat, const nn::Var<T>& x, bool mean = false) {
    return nn::bce_loss(x_hat, x, mean);
}

/// 0.5 * sum(exp(log_var) + mu^2 - 1 - log_var), log_var clamped to [-20, 20].
template <typename T>
nn::Var<T> kl_loss(const LatentParams<T>& p, bool mean = false) {
    const T lim = static_cast<T>(kLogVarClamp);
    return nn::kl_loss(p.mu, nn::clamp(p.log_var, -lim, lim), mean);
}

template <typename T>
nn::Var<T> vae_loss(const nn::Var<T>& x_hat, const nn::Var<T>& x, const LatentParams<T>& p, double kl_weight,
                    bool mean = false) {
    require(kl_weight >= 0.0, "vae_loss: kl_weight must be >= 0, got ", kl_weight);
    return nn::add(bce_recon_loss(x_hat, x, mean), nn::scale(kl_loss(p, mean), static_cast<T>(kl_weight)));
}

}  // namespace rr
