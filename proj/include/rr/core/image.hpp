// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "rr/core/error.hpp"
#include "rr/nn/tensor.hpp"

namespace rr {

/// H x W x 3 image, interleaved RGB, row-major. Values nominally in [0, 1].
class Image {
public:
    static constexpr int kChannels = 3;

    Image() = default;
    Image(int height, int width, double fill = 0.0)
        : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width * kChannels, fill) {
        require(height >= 0 && width >= 0, "negative image size");
    }
    Image(int height, int width, std::vector<double> data) : height_(height), width_(width), data_(std::move(data)) {
        require(data_.size() == static_cast<std::size_t>(height) * width * kChannels, "image data size mismatch");
    }

    int height() const { return height_; }
    int width() const { return width_; }
    bool empty() const { return data_.empty(); }
    std::size_t size() const { return data_.size(); }

    double& at(int y, int x, int c) { return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c]; }
    double at(int y, int x, int c) const { return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Image& o) const { return height_ == o.height_ && width_ == o.width_; }

    void clamp01() {
        for (auto& v : data_) v = std::clamp(v, 0.0, 1.0);
    }

    Image flipped_horizontal() const {
        Image out(height_, width_);
        for (int y = 0; y < height_; ++y)
            for (int x = 0; x < width_; ++x)
                for (int c = 0; c < kChannels; ++c) out.at(y, width_ - 1 - x, c) = at(y, x, c);
        return out;
    }

    double mean() const {
        double s = 0;
        for (double v : data_) s += v;
        return data_.empty() ? 0.0 : s / static_cast<double>(data_.size());
    }

    friend bool operator==(const Image& a, const Image& b) {
        return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
    }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

/// Packs same-sized images into an NCHW tensor.
template <typename T>
nn::Tensor<T> to_tensor(const std::vector<const Image*>& images) {
    require(!images.empty(), "to_tensor: no images");
    const int h = images[0]->height(), w = images[0]->width();
    nn::Tensor<T> out({static_cast<int>(images.size()), 3, h, w});
    for (std::size_t n = 0; n < images.size(); ++n) {
        require(images[n]->height() == h && images[n]->width() == w, "to_tensor: mixed image sizes");
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) out.at(static_cast<int>(n), c, y, x) = static_cast<T>(images[n]->at(y, x, c));
    }
    return out;
}

template <typename T>
nn::Tensor<T> to_tensor(const Image& image) {
    return to_tensor<T>(std::vector<const Image*>{&image});
}

/// Extracts sample `n` of an NCHW tensor as an image (no clamping).
template <typename T>
Image from_tensor(const nn::Tensor<T>& t, int n = 0) {
    require(t.ndim() == 4 && t.dim(1) == 3, "from_tensor expects [N, 3, H, W], got ", nn::shape_str(t.shape()));
    const int h = t.dim(2), w = t.dim(3);
    Image out(h, w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(y, x, c) = static_cast<double>(t.at(n, c, y, x));
    return out;
}

}  // namespace rr
