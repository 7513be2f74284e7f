// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rr/nn/layers.hpp"

namespace rr {

/// One named f32 array of a checkpoint.
struct NamedArray {
    std::string name;
    nn::Shape shape;
    std::vector<float> data;
};

/// Ordered collection of named arrays, serialised as
///
///   "RRGN1\0" | u32 count | count x entry
///   entry = u32 name_len | name (UTF-8) | u8 dtype (0 = f32) | u32 ndim |
///           ndim x u32 dim | numel x f32 payload
///
/// All integers and floats are little-endian; payloads are row-major.
class Checkpoint {
public:
    void put(std::string name, nn::Shape shape, std::vector<float> data);

    template <typename T>
    void put(std::string name, const nn::Tensor<T>& t) {
        std::vector<float> d(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) d[i] = static_cast<float>(t[i]);
        put(std::move(name), t.shape(), std::move(d));
    }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }
    const NamedArray& get(const std::string& name) const;

    template <typename T>
    nn::Tensor<T> tensor(const std::string& name) const {
        const auto& a = get(name);
        nn::Tensor<T> t(a.shape);
        for (std::size_t i = 0; i < a.data.size(); ++i) t[i] = static_cast<T>(a.data[i]);
        return t;
    }

    const std::vector<NamedArray>& arrays() const { return arrays_; }
    std::size_t size() const { return arrays_.size(); }

    friend bool operator==(const Checkpoint& a, const Checkpoint& b);

private:
    std::vector<NamedArray> arrays_;
    std::map<std::string, std::size_t> index_;
};

inline constexpr std::string_view kCheckpointMagic{"RRGN1\0", 6};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError naming the byte offset of the first problem.
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies every parameter into `ckpt` under `prefix + name`.
template <typename T>
void store_params(Checkpoint& ckpt, const nn::ParamStore<T>& params, const std::string& prefix) {
    for (const auto& [name, v] : params.entries()) ckpt.put(prefix + name, v.value());
}

/// Overwrites every parameter from `ckpt`; a missing array or a shape
/// mismatch is a CompatibilityError.
template <typename T>
void load_params(const Checkpoint& ckpt, nn::ParamStore<T>& params, const std::string& prefix) {
    for (const auto& [name, v] : params.entries()) {
        const std::string key = prefix + name;
        if (!ckpt.contains(key)) throw CompatibilityError("checkpoint lacks array '" + key + "'");
        const auto& a = ckpt.get(key);
        if (a.shape != v.shape())
            throw CompatibilityError("array '" + key + "' has shape " + nn::shape_str(a.shape) + ", model expects " +
                                     nn::shape_str(v.shape()));
        nn::Var<T> p = v;
        auto& dst = p.mutable_value();
        for (std::size_t i = 0; i < a.data.size(); ++i) dst[i] = static_cast<T>(a.data[i]);
    }
}

}  // namespace rr
