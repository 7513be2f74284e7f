// Copyright (C) 2026 retina-restore authors
// SPDX-License-Identifier: Apache-2.0

#include "rr/dataset/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "rr/core/rng.hpp"

namespace rr {

std::vector<DegradationCategory> GeneratorConfig::default_categories() {
    using O = OcclusionTarget;
    return {
        {"mild", 0.20, 0.0, 0.6, 0.0, 0.04, 0.80, 1.00, O::none},
        {"disc_blur", 0.20, 1.3, 1.7, 0.0, 0.03, 0.85, 1.00, O::none},
        {"disc_occlusion", 0.20, 0.0, 0.6, 0.0, 0.03, 0.85, 1.00, O::optic_disc},
        {"macula_occlusion", 0.10, 0.0, 0.6, 0.0, 0.03, 0.85, 1.00, O::macula},
        {"heavy_blur", 0.10, 2.8, 4.0, 0.0, 0.03, 0.85, 1.00, O::none},
        {"dark", 0.10, 0.0, 0.6, 0.0, 0.03, 0.15, 0.30, O::none},
        {"noisy", 0.10, 0.0, 0.6, 0.15, 0.22, 0.85, 1.00, O::none},
    };
}

std::vector<DegradationCategory> GeneratorConfig::separable_blur_categories() {
    using O = OcclusionTarget;
    return {
        {"sharp", 0.2, 0.0, 0.4, 0.0, 0.0, 1.0, 1.0, O::none},
        {"disc_blur", 0.3, 1.4, 1.6, 0.0, 0.0, 1.0, 1.0, O::none},
        {"macula_blur", 0.2, 2.2, 2.4, 0.0, 0.0, 1.0, 1.0, O::none},
        {"retina_blur", 0.15, 3.3, 3.8, 0.0, 0.0, 1.0, 1.0, O::none},
        {"invalid_blur", 0.15, 6.0, 7.0, 0.0, 0.0, 1.0, 1.0, O::none},
    };
}

bool box_overlaps_ellipse(const Box& box, double cx, double cy, double rx, double ry) {
    // Clamping is separable per axis, so it commutes with the axis scaling
    // that maps the ellipse onto the unit circle.
    const double px = std::clamp(cx, static_cast<double>(box.x), static_cast<double>(box.x + box.w));
    const double py = std::clamp(cy, static_cast<double>(box.y), static_cast<double>(box.y + box.h));
    const double dx = (px - cx) / rx, dy = (py - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
}

ReadabilityLabels derive_labels(const DegradationSpec& spec, const Anatomy& a, const LabelThresholds& th) {
    bool disc_hidden = false, macula_hidden = false;
    for (const auto& b : spec.occlusion_boxes) {
        disc_hidden = disc_hidden || box_overlaps_ellipse(b, a.disc_cx, a.disc_cy, a.disc_rx, a.disc_ry);
        macula_hidden =
            macula_hidden || box_overlaps_ellipse(b, a.macula_cx, a.macula_cy, a.macula_radius, a.macula_radius);
    }
    ReadabilityLabels l;
    l.valid = spec.blur_sigma <= th.sigma_valid && spec.brightness_scale >= th.min_brightness_valid &&
              spec.noise_std <= th.max_noise_valid;
    const bool lit = spec.brightness_scale >= th.min_brightness_readable;
    l.optic_disc = spec.blur_sigma <= th.sigma_optic_disc && !disc_hidden;
    l.macula = l.valid && lit && spec.blur_sigma <= th.sigma_macula && !macula_hidden;
    l.retina = l.valid && lit && spec.blur_sigma <= th.sigma_retina && spec.noise_std <= th.max_noise_retina;
    return l;
}

namespace {

struct Point {
    double x, y;
};

double segment_distance(Point p, Point a, Point b) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

std::vector<Point> bezier(Point p0, Point p1, Point p2, int segments) {
    std::vector<Point> pts;
    for (int i = 0; i <= segments; ++i) {
        const double t = static_cast<double>(i) / segments, u = 1.0 - t;
        pts.push_back({u * u * p0.x + 2 * u * t * p1.x + t * t * p2.x, u * u * p0.y + 2 * u * t * p1.y + t * t * p2.y});
    }
    return pts;
}

// Darkens the image along a polyline with a soft-edged stroke.
void draw_vessel(Image& img, const std::vector<Point>& path, double width, double depth) {
    const int h = img.height(), w = img.width();
    double minx = 1e9, miny = 1e9, maxx = -1e9, maxy = -1e9;
    for (const auto& p : path) {
        minx = std::min(minx, p.x), maxx = std::max(maxx, p.x);
        miny = std::min(miny, p.y), maxy = std::max(maxy, p.y);
    }
    const int x0 = std::max(0, static_cast<int>(minx - width - 2)), x1 = std::min(w - 1, static_cast<int>(maxx + width + 2));
    const int y0 = std::max(0, static_cast<int>(miny - width - 2)), y1 = std::min(h - 1, static_cast<int>(maxy + width + 2));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const Point p{x + 0.5, y + 0.5};
            double d = 1e9;
            for (std::size_t i = 0; i + 1 < path.size(); ++i) d = std::min(d, segment_distance(p, path[i], path[i + 1]));
            const double cover = std::clamp(width / 2 + 0.5 - d, 0.0, 1.0);
            if (cover <= 0) continue;
            img.at(y, x, 0) *= 1.0 - 0.55 * depth * cover;
            img.at(y, x, 1) *= 1.0 - depth * cover;
            img.at(y, x, 2) *= 1.0 - depth * cover;
        }
}

}  // namespace

Image draw_clean_fundus(int size, std::uint64_t seed, Anatomy* anatomy_out) {
    require(size >= 32, "image size must be >= 32, got ", size);
    Rng rng(seed);
    const double s = size;
    const double pi = std::numbers::pi;

    Anatomy a;
    a.fundus_cx = s / 2 + rng.uniform(-0.02, 0.02) * s;
    a.fundus_cy = s / 2 + rng.uniform(-0.02, 0.02) * s;
    a.fundus_radius = 0.46 * s * rng.uniform(0.97, 1.0);
    const double r = a.fundus_radius;
    const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;  // disc on the right when +1
    a.disc_cx = a.fundus_cx + side * r * rng.uniform(0.36, 0.44);
    a.disc_cy = a.fundus_cy + r * rng.uniform(-0.08, 0.08);
    a.disc_rx = r * rng.uniform(0.12, 0.15);
    a.disc_ry = a.disc_rx * rng.uniform(1.08, 1.2);
    a.macula_cx = a.fundus_cx - side * r * rng.uniform(0.12, 0.18);
    a.macula_cy = a.fundus_cy + r * rng.uniform(-0.05, 0.05);
    a.macula_radius = r * rng.uniform(0.15, 0.19);

    const std::array<double, 3> base{0.80 + rng.uniform(-0.05, 0.05), 0.38 + rng.uniform(-0.05, 0.05),
                                     0.17 + rng.uniform(-0.03, 0.03)};
    const std::array<double, 3> disc_color{0.98, 0.88 + rng.uniform(-0.04, 0.04), 0.62 + rng.uniform(-0.06, 0.06)};

    struct Wave {
        double kx, ky, phase, amp;
    };
    std::array<Wave, 4> waves{};
    for (auto& wv : waves) {
        const double ang = rng.uniform(0, pi), freq = rng.uniform(2.0, 5.0) * 2 * pi / s;
        wv = {freq * std::cos(ang), freq * std::sin(ang), rng.uniform(0, 2 * pi), rng.uniform(0.01, 0.025)};
    }

    Image img(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            const double dx = px - a.fundus_cx, dy = py - a.fundus_cy;
            const double rr2 = (dx * dx + dy * dy) / (r * r);
            double tex = 0;
            for (const auto& wv : waves) tex += wv.amp * std::sin(wv.kx * px + wv.ky * py + wv.phase);
            const double vign = 1.0 - 0.35 * rr2;
            std::array<double, 3> col{};
            for (int c = 0; c < 3; ++c) col[static_cast<std::size_t>(c)] = base[static_cast<std::size_t>(c)] * vign + tex;

            const double mdx = px - a.macula_cx, mdy = py - a.macula_cy;
            const double sig = 0.55 * a.macula_radius;
            const double dip = 0.45 * std::exp(-(mdx * mdx + mdy * mdy) / (2 * sig * sig));
            for (auto& v : col) v *= 1.0 - dip;

            const double qx = (px - a.disc_cx) / a.disc_rx, qy = (py - a.disc_cy) / a.disc_ry;
            const double q = qx * qx + qy * qy;
            const double alpha = std::clamp((1.15 - q) / 0.3, 0.0, 1.0);
            const double cup = std::clamp((0.35 - q) / 0.2, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) {
                auto& v = col[static_cast<std::size_t>(c)];
                v = v + (disc_color[static_cast<std::size_t>(c)] - v) * 0.92 * alpha;
                v = v + (1.0 - v) * 0.5 * cup;
            }
            const double edge = std::clamp(r - std::sqrt(dx * dx + dy * dy) + 0.5, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::clamp(col[static_cast<std::size_t>(c)] * edge, 0.0, 1.0);
        }

    // Vessels: two arcades bending around the macula, two nasal branches and
    // a couple of side branches.
    const double scale = s / 64.0;
    const Point disc{a.disc_cx, a.disc_cy};
    auto within = [&](Point p) {
        const double dx = p.x - a.fundus_cx, dy = p.y - a.fundus_cy;
        const double d = std::sqrt(dx * dx + dy * dy), lim = 0.97 * r;
        if (d <= lim) return p;
        return Point{a.fundus_cx + dx * lim / d, a.fundus_cy + dy * lim / d};
    };
    std::vector<std::vector<Point>> paths;
    std::vector<double> widths;
    for (double vert : {-1.0, 1.0}) {
        const Point ctrl{a.disc_cx - side * r * rng.uniform(0.05, 0.2), a.disc_cy + vert * r * rng.uniform(0.5, 0.7)};
        const Point end = within({a.macula_cx - side * r * rng.uniform(0.3, 0.5), a.macula_cy + vert * r * rng.uniform(0.35, 0.6)});
        paths.push_back(bezier(disc, ctrl, end, 24));
        widths.push_back(scale * rng.uniform(1.3, 1.8));
    }
    for (double vert : {-1.0, 1.0}) {
        const Point ctrl{a.disc_cx + side * r * rng.uniform(0.15, 0.3), a.disc_cy + vert * r * rng.uniform(0.15, 0.3)};
        const Point end = within({a.disc_cx + side * r * rng.uniform(0.4, 0.6), a.disc_cy + vert * r * rng.uniform(0.4, 0.7)});
        paths.push_back(bezier(disc, ctrl, end, 16));
        widths.push_back(scale * rng.uniform(0.9, 1.3));
    }
    for (int b = 0; b < 2; ++b) {
        const auto& parent = paths[static_cast<std::size_t>(b)];
        const Point start = parent[static_cast<std::size_t>(rng.uniform_int(8, 16))];
        const double vert = b == 0 ? -1.0 : 1.0;
        const Point ctrl{start.x - side * r * rng.uniform(0.05, 0.15), start.y - vert * r * rng.uniform(0.0, 0.1)};
        const Point end = within({start.x - side * r * rng.uniform(0.25, 0.4), start.y - vert * r * rng.uniform(0.05, 0.25)});
        paths.push_back(bezier(start, ctrl, end, 12));
        widths.push_back(scale * rng.uniform(0.7, 1.0));
    }
    for (std::size_t i = 0; i < paths.size(); ++i) draw_vessel(img, paths[i], widths[i], rng.uniform(0.35, 0.5));

    if (anatomy_out) *anatomy_out = a;
    return img;
}

namespace {

double draw_range(Rng& rng, double lo, double hi) { return hi > lo ? rng.uniform(lo, hi) : lo; }

Box square_box_at(double cx, double cy, int side, int size) {
    side = std::clamp(side, 1, size);
    int x = static_cast<int>(std::lround(cx - side / 2.0));
    int y = static_cast<int>(std::lround(cy - side / 2.0));
    x = std::clamp(x, 0, size - side);
    y = std::clamp(y, 0, size - side);
    return {x, y, side, side};
}

DegradationSpec sample_spec(const DegradationCategory& cat, const Anatomy& a, int size, Rng& rng) {
    DegradationSpec spec;
    spec.blur_sigma = draw_range(rng, cat.blur_lo, cat.blur_hi);
    spec.noise_std = draw_range(rng, cat.noise_lo, cat.noise_hi);
    spec.brightness_scale = draw_range(rng, cat.brightness_lo, cat.brightness_hi);
    const double r = a.fundus_radius;
    if (cat.occlusion == OcclusionTarget::optic_disc) {
        const int side = static_cast<int>(std::lround(r * rng.uniform(0.32, 0.42)));
        const double cx = a.disc_cx + a.disc_rx * rng.uniform(-0.3, 0.3);
        const double cy = a.disc_cy + a.disc_ry * rng.uniform(-0.3, 0.3);
        spec.occlusion_boxes.push_back(square_box_at(cx, cy, side, size));
    } else if (cat.occlusion == OcclusionTarget::macula) {
        int side = static_cast<int>(std::lround(r * rng.uniform(0.32, 0.42)));
        const double cx = a.macula_cx + a.macula_radius * rng.uniform(-0.2, 0.2);
        const double cy = a.macula_cy + a.macula_radius * rng.uniform(-0.2, 0.2);
        Box b = square_box_at(cx, cy, side, size);
        while (side > 2 && box_overlaps_ellipse(b, a.disc_cx, a.disc_cy, a.disc_rx, a.disc_ry)) {
            --side;
            b = square_box_at(cx, cy, side, size);
        }
        spec.occlusion_boxes.push_back(b);
    }
    return spec;
}

}  // namespace

std::vector<FundusSample> generate_synthetic_fundus(std::uint64_t seed, int count, int size, const GeneratorConfig& config) {
    require(count >= 1, "count must be >= 1, got ", count);
    require(size >= 32, "size must be >= 32, got ", size);
    require(config.degraded_fraction >= 0.0 && config.degraded_fraction <= 1.0, "degraded_fraction must be in [0, 1]");
    double total_weight = 0;
    for (const auto& c : config.categories) {
        require(c.weight >= 0.0, "category weight must be >= 0");
        total_weight += c.weight;
    }
    require(config.degraded_fraction == 0.0 || total_weight > 0.0, "no degradation categories with positive weight");

    std::vector<FundusSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        FundusSample s;
        char id[32];
        std::snprintf(id, sizeof id, "fundus_%05d", i);
        s.id = id;
        s.clean = draw_clean_fundus(size, rng.next(), &s.anatomy);
        const std::uint64_t noise_seed = rng.next();
        if (rng.bernoulli(config.degraded_fraction)) {
            double pick = rng.uniform() * total_weight;
            const DegradationCategory* cat = &config.categories.back();
            for (const auto& c : config.categories) {
                if (pick < c.weight) {
                    cat = &c;
                    break;
                }
                pick -= c.weight;
            }
            s.degradation = sample_spec(*cat, s.anatomy, size, rng);
        }
        s.labels = derive_labels(s.degradation, s.anatomy, config.thresholds);
        s.image = degrade(s.clean, s.degradation, noise_seed);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace rr
