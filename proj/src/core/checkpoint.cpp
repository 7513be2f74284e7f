// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include "rr/core/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace rr {

void Checkpoint::put(std::string name, nn::Shape shape, std::vector<float> data) {
    require(!name.empty(), "checkpoint array name must be non-empty");
    require(!index_.count(name), "duplicate checkpoint array '", name, "'");
    for (int d : shape) require(d >= 0, "negative dimension in array '", name, "'");
    require(nn::numel(shape) == data.size(), "array '", name, "': shape ", nn::shape_str(shape), " does not match ",
            data.size(), " values");
    index_[name] = arrays_.size();
    arrays_.push_back({std::move(name), std::move(shape), std::move(data)});
}

const NamedArray& Checkpoint::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw FormatError("checkpoint has no array '" + name + "'");
    return arrays_[it->second];
}

bool operator==(const Checkpoint& a, const Checkpoint& b) {
    if (a.arrays_.size() != b.arrays_.size()) return false;
    for (std::size_t i = 0; i < a.arrays_.size(); ++i) {
        const auto &x = a.arrays_[i], &y = b.arrays_[i];
        if (x.name != y.name || x.shape != y.shape || x.data.size() != y.data.size()) return false;
        // Bitwise, so NaN payloads compare equal to themselves.
        if (!x.data.empty() && std::memcmp(x.data.data(), y.data.data(), x.data.size() * sizeof(float)) != 0)
            return false;
    }
    return true;
}

namespace {

constexpr std::uint8_t kDtypeF32 = 0;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void need(std::size_t n, const std::string& what) const {
        if (remaining() < n)
            throw FormatError("truncated checkpoint: " + what + " at offset " + std::to_string(pos_) + " needs " +
                              std::to_string(n) + " bytes, " + std::to_string(remaining()) + " available");
    }

    std::uint32_t u32(const std::string& what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint8_t u8(const std::string& what) {
        need(1, what);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }

    std::string_view take(std::size_t n, const std::string& what) {
        need(n, what);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::string out(kCheckpointMagic);
    put_u32(out, static_cast<std::uint32_t>(ckpt.size()));
    for (const auto& a : ckpt.arrays()) {
        put_u32(out, static_cast<std::uint32_t>(a.name.size()));
        out += a.name;
        out.push_back(static_cast<char>(kDtypeF32));
        put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
        for (int d : a.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (float f : a.data) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, sizeof bits);
            put_u32(out, bits);
        }
    }
    return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
    Reader r(bytes);
    const auto magic = r.take(kCheckpointMagic.size(), "magic");
    if (magic != kCheckpointMagic) throw FormatError("bad checkpoint magic at offset 0");
    const std::uint32_t count = r.u32("entry count");
    Checkpoint ckpt;
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::string entry = "entry " + std::to_string(e);
        const std::size_t entry_offset = r.offset();
        const std::uint32_t name_len = r.u32(entry + " name length");
        std::string name(r.take(name_len, entry + " name"));
        const std::size_t dtype_offset = r.offset();
        const std::uint8_t dtype = r.u8(entry + " dtype");
        if (dtype != kDtypeF32)
            throw FormatError("unknown dtype tag " + std::to_string(dtype) + " for '" + name + "' at offset " +
                              std::to_string(dtype_offset));
        const std::uint32_t ndim = r.u32(entry + " ndim");
        nn::Shape shape;
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            const std::uint32_t dim = r.u32(entry + " shape");
            if (dim > static_cast<std::uint32_t>(std::numeric_limits<int>::max()))
                throw FormatError("dimension too large in '" + name + "' at offset " + std::to_string(r.offset() - 4));
            shape.push_back(static_cast<int>(dim));
            numel *= dim;
        }
        if (numel > r.remaining() / 4)
            throw FormatError("truncated payload for '" + name + "' at offset " + std::to_string(r.offset()) + ": needs " +
                              std::to_string(numel * 4) + " bytes, " + std::to_string(r.remaining()) + " available");
        std::vector<float> data(numel);
        for (std::size_t i = 0; i < numel; ++i) {
            const std::uint32_t bits = r.u32("payload");
            std::memcpy(&data[i], &bits, sizeof bits);
        }
        try {
            ckpt.put(std::move(name), std::move(shape), std::move(data));
        } catch (const ArgumentError& ex) {
            throw FormatError(std::string(ex.what()) + " (entry at offset " + std::to_string(entry_offset) + ")");
        }
    }
    if (r.remaining() != 0)
        throw FormatError("trailing bytes after last checkpoint entry at offset " + std::to_string(r.offset()));
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const std::string bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes);
}

}  // namespace rr
