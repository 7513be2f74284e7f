// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <string_view>

#include "rr/core/error.hpp"

namespace rr {

enum class Label { valid = 0, macula = 1, optic_disc = 2, retina = 3 };

inline constexpr int kNumLabels = 4;
inline constexpr std::array<std::string_view, kNumLabels> kLabelNames{"valid", "macula", "optic_disc", "retina"};

inline Label label_from_name(std::string_view name) {
    for (int i = 0; i < kNumLabels; ++i)
        if (kLabelNames[static_cast<std::size_t>(i)] == name) return static_cast<Label>(i);
    throw ArgumentError("unknown readability label '" + std::string(name) + "'");
}

/// Serialised order is (valid, macula, optic_disc, retina).
struct ReadabilityLabels {
    bool valid = true;
    bool macula = true;
    bool optic_disc = true;
    bool retina = true;

    bool get(Label l) const {
        switch (l) {
            case Label::valid: return valid;
            case Label::macula: return macula;
            case Label::optic_disc: return optic_disc;
            case Label::retina: return retina;
        }
        return false;
    }
    bool get(int i) const { return get(static_cast<Label>(i)); }

    void set(Label l, bool v) {
        switch (l) {
            case Label::valid: valid = v; break;
            case Label::macula: macula = v; break;
            case Label::optic_disc: optic_disc = v; break;
            case Label::retina: retina = v; break;
        }
    }

    void set(int i, bool v) { set(static_cast<Label>(i), v); }

    bool all() const { return valid && macula && optic_disc && retina; }

    /// "1011"-style bit string in serialised order.
    std::string bits() const {
        std::string s;
        for (int i = 0; i < kNumLabels; ++i) s += get(i) ? '1' : '0';
        return s;
    }

    static ReadabilityLabels from_bits(std::string_view s) {
        require<FormatError>(s.size() == kNumLabels, "label bit string must have 4 characters, got '", s, "'");
        ReadabilityLabels l;
        for (int i = 0; i < kNumLabels; ++i) {
            const char ch = s[static_cast<std::size_t>(i)];
            require<FormatError>(ch == '0' || ch == '1', "invalid label bit '", ch, "'");
            l.set(static_cast<Label>(i), ch == '1');
        }
        return l;
    }

    friend bool operator==(const ReadabilityLabels&, const ReadabilityLabels&) = default;
};

}  // namespace rr
