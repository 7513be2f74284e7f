// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include "rr/dataset/io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

namespace rr {

namespace fs = std::filesystem;
using nlohmann::json;

double quantize_8bit(double p) { return std::round(std::clamp(p, 0.0, 1.0) * 255.0) / 255.0; }

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const fs::path& path, const Image& image) {
    require(!image.empty(), "write_png: empty image");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialisation failed");
    }
    std::vector<png_byte> row(static_cast<std::size_t>(image.width()) * 3);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng error while writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()), static_cast<png_uint_32>(image.height()), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<std::size_t>(x) * 3 + c] =
                    static_cast<png_byte>(std::lround(std::clamp(image.at(y, x, c), 0.0, 1.0) * 255.0));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const fs::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng error while reading " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    std::vector<png_byte> row(png_get_rowbytes(png, info));
    Image img(h, w);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = row[static_cast<std::size_t>(x) * 3 + c] / 255.0;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

json to_json(const DegradationSpec& spec) {
    json boxes = json::array();
    for (const auto& b : spec.occlusion_boxes) boxes.push_back({b.x, b.y, b.w, b.h});
    return {{"blur_sigma", spec.blur_sigma},
            {"occlusion_boxes", boxes},
            {"brightness_scale", spec.brightness_scale},
            {"noise_std", spec.noise_std}};
}

DegradationSpec degradation_from_json(const json& j) {
    DegradationSpec s;
    s.blur_sigma = j.at("blur_sigma").get<double>();
    s.brightness_scale = j.at("brightness_scale").get<double>();
    s.noise_std = j.at("noise_std").get<double>();
    for (const auto& b : j.at("occlusion_boxes")) {
        require<FormatError>(b.is_array() && b.size() == 4, "occlusion box must be [x, y, w, h]");
        s.occlusion_boxes.push_back({b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()});
    }
    return s;
}

json to_json(const Anatomy& a) {
    return {{"fundus", {a.fundus_cx, a.fundus_cy, a.fundus_radius}},
            {"disc", {a.disc_cx, a.disc_cy, a.disc_rx, a.disc_ry}},
            {"macula", {a.macula_cx, a.macula_cy, a.macula_radius}}};
}

Anatomy anatomy_from_json(const json& j) {
    Anatomy a;
    const auto& f = j.at("fundus");
    const auto& d = j.at("disc");
    const auto& m = j.at("macula");
    a.fundus_cx = f.at(0), a.fundus_cy = f.at(1), a.fundus_radius = f.at(2);
    a.disc_cx = d.at(0), a.disc_cy = d.at(1), a.disc_rx = d.at(2), a.disc_ry = d.at(3);
    a.macula_cx = m.at(0), a.macula_cy = m.at(1), a.macula_radius = m.at(2);
    return a;
}

json to_json(const ManifestEntry& e) {
    return {{"id", e.id},
            {"labels", e.labels.bits()},
            {"degradation", to_json(e.degradation)},
            {"anatomy", to_json(e.anatomy)},
            {"path", e.path},
            {"clean_path", e.clean_path}};
}

ManifestEntry manifest_entry_from_json(const json& j) {
    try {
        ManifestEntry e;
        e.id = j.at("id").get<std::string>();
        e.labels = ReadabilityLabels::from_bits(j.at("labels").get<std::string>());
        e.degradation = degradation_from_json(j.at("degradation"));
        e.anatomy = anatomy_from_json(j.at("anatomy"));
        e.path = j.at("path").get<std::string>();
        e.clean_path = j.value("clean_path", std::string{});
        return e;
    } catch (const json::exception& ex) {
        throw FormatError(std::string("malformed manifest entry: ") + ex.what());
    }
}

void write_corpus(const fs::path& dir, const std::vector<FundusSample>& samples) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "clean");
    std::ofstream manifest(dir / "manifest.jsonl");
    if (!manifest) throw IoError("cannot write " + (dir / "manifest.jsonl").string());
    for (const auto& s : samples) {
        ManifestEntry e{s.id, s.labels, s.degradation, s.anatomy, "images/" + s.id + ".png", "clean/" + s.id + ".png"};
        write_png(dir / e.path, s.image);
        write_png(dir / e.clean_path, s.clean);
        manifest << to_json(e).dump() << '\n';
    }
}

std::vector<FundusSample> read_corpus(const fs::path& dir) {
    std::ifstream in(dir / "manifest.jsonl");
    if (!in) throw IoError("cannot open " + (dir / "manifest.jsonl").string());
    std::vector<FundusSample> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& ex) {
            throw FormatError("manifest line " + std::to_string(lineno) + ": " + ex.what());
        }
        ManifestEntry e = manifest_entry_from_json(j);
        FundusSample s;
        s.id = e.id;
        s.labels = e.labels;
        s.degradation = e.degradation;
        s.anatomy = e.anatomy;
        s.image = read_png(dir / e.path);
        s.clean = e.clean_path.empty() ? s.image : read_png(dir / e.clean_path);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace rr
