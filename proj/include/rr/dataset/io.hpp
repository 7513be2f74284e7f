// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "rr/dataset/synthetic.hpp"

namespace rr {

/// 8-bit RGB PNG. Writing quantises each value to round(clamp(p) * 255);
/// reading yields v / 255, so a round trip maps p to round(p * 255) / 255.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

double quantize_8bit(double p);

nlohmann::json to_json(const DegradationSpec& spec);
DegradationSpec degradation_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Anatomy& a);
Anatomy anatomy_from_json(const nlohmann::json& j);

/// One manifest line. Paths are relative to the manifest's directory.
struct ManifestEntry {
    std::string id;
    ReadabilityLabels labels;
    DegradationSpec degradation;
    Anatomy anatomy;
    std::string path;
    std::string clean_path;
};

nlohmann::json to_json(const ManifestEntry& e);
ManifestEntry manifest_entry_from_json(const nlohmann::json& j);

/// Writes `images/<id>.png`, `clean/<id>.png` and `manifest.jsonl` under `dir`.
void write_corpus(const std::filesystem::path& dir, const std::vector<FundusSample>& samples);

/// Reads a corpus written by write_corpus (images come back 8-bit quantised).
std::vector<FundusSample> read_corpus(const std::filesystem::path& dir);

}  // namespace rr
