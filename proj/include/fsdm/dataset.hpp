#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fsdm/denoiser.hpp"
#include "fsdm/geolab.hpp"
#include "fsdm/rng.hpp"
#include "fsdm/tensor.hpp"

namespace fsdm {

enum class DatasetKind { shapes, moons };

inline const char* dataset_kind_name(DatasetKind k) {
    switch (k) {
        case DatasetKind::shapes: return "shapes";
        case DatasetKind::moons: return "moons";
    }
    throw std::invalid_argument("dataset_kind_name: unknown kind");
}

inline DatasetKind parse_dataset_kind(const std::string& name) {
    if (name == "shapes") return DatasetKind::shapes;
    if (name == "moons") return DatasetKind::moons;
    throw std::invalid_argument("dataset kind must be shapes or moons, got '" + name + "'");
}

/// One side of a translation problem: a bag of same-shaped samples. Image
/// items are 1 x 16 x 16 with values in [-1, 1]; point items are 2-vectors.
struct DomainDataset {
    DataMode mode = DataMode::image;
    std::string domain;  // "source" | "target"
    bool few_shot = false;
    std::vector<Tensor> items;
};

/// FNV-1a over the exact bit patterns of every item, so any change to content,
/// order, or count changes the value.
inline std::uint64_t dataset_checksum(const DomainDataset& d) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffULL;
            h *= 0x100000001b3ULL;
        }
    };
    feed(d.items.size());
    for (const Tensor& t : d.items) {
        feed(static_cast<std::uint64_t>(t.numel()));
        for (double x : t.data) {
            std::uint64_t bits;
            std::memcpy(&bits, &x, sizeof bits);
            feed(bits);
        }
    }
    return h;
}

namespace detail {

constexpr int kGlyphRes = 16;  // image side
constexpr int kSuper = 3;      // supersampling factor per axis (anti-aliasing)

/// A single randomized glyph in image coordinates ([0, 16) per axis):
/// an ellipse, a rectangle, or a triangle with jittered pose.
struct Glyph {
    int kind = 0;  // 0 ellipse, 1 rectangle, 2 triangle
    double cx = 8.0, cy = 8.0;
    double a = 4.0, b = 4.0, theta = 0.0;  // ellipse semi-axes / rectangle half-extents
    double vx[3] = {0, 0, 0}, vy[3] = {0, 0, 0};

    bool inside(double x, double y) const {
        if (kind == 2) {
            // consistent-side test against all three edges (either winding)
            double s[3];
            for (int e = 0; e < 3; ++e) {
                const int f = (e + 1) % 3;
                s[e] = (vx[f] - vx[e]) * (y - vy[e]) - (vy[f] - vy[e]) * (x - vx[e]);
            }
            return (s[0] >= 0 && s[1] >= 0 && s[2] >= 0) || (s[0] <= 0 && s[1] <= 0 && s[2] <= 0);
        }
        const double dx = x - cx, dy = y - cy;
        const double c = std::cos(theta), sn = std::sin(theta);
        const double u = c * dx + sn * dy, v = -sn * dx + c * dy;
        if (kind == 0) return (u / a) * (u / a) + (v / b) * (v / b) <= 1.0;
        return std::abs(u) <= a && std::abs(v) <= b;
    }
};

inline Glyph draw_glyph(RngStream& rng) {
    Glyph g;
    g.kind = static_cast<int>(rng.next_int(0, 2));
    g.cx = 6.5 + 3.0 * rng.next_unit();
    g.cy = 6.5 + 3.0 * rng.next_unit();
    if (g.kind == 2) {
        const double base[3] = {M_PI / 2.0, M_PI / 2.0 + 2.0 * M_PI / 3.0, M_PI / 2.0 + 4.0 * M_PI / 3.0};
        for (int i = 0; i < 3; ++i) {
            const double ang = base[i] + (rng.next_unit() - 0.5) * 0.8;
            const double r = 3.5 + 2.0 * rng.next_unit();
            g.vx[i] = g.cx + r * std::cos(ang);
            g.vy[i] = g.cy + r * std::sin(ang);
        }
    } else {
        g.a = 2.5 + 3.0 * rng.next_unit();
        g.b = 2.5 + 3.0 * rng.next_unit();
        g.theta = M_PI * rng.next_unit();
    }
    return g;
}

/// Supersampled occupancy mask at (res * kSuper)^2.
inline std::vector<char> glyph_mask(const Glyph& g) {
    const int hi = kGlyphRes * kSuper;
    std::vector<char> mask(static_cast<std::size_t>(hi) * hi, 0);
    for (int y = 0; y < hi; ++y)
        for (int x = 0; x < hi; ++x)
            mask[static_cast<std::size_t>(y) * hi + x] =
                g.inside((x + 0.5) / kSuper, (y + 0.5) / kSuper) ? 1 : 0;
    return mask;
}

/// Average the supersampled mask down to res^2 coverage in [0, 1].
inline Tensor downsample_coverage(const std::vector<char>& mask) {
    const int hi = kGlyphRes * kSuper;
    Tensor cov = Tensor::zeros({1, kGlyphRes, kGlyphRes});
    for (int y = 0; y < kGlyphRes; ++y)
        for (int x = 0; x < kGlyphRes; ++x) {
            int acc = 0;
            for (int sy = 0; sy < kSuper; ++sy)
                for (int sx = 0; sx < kSuper; ++sx)
                    acc += mask[static_cast<std::size_t>(y * kSuper + sy) * hi + (x * kSuper + sx)];
            cov[static_cast<std::int64_t>(y) * kGlyphRes + x] = double(acc) / (kSuper * kSuper);
        }
    return cov;
}

/// Filled rendering: background -1, interior +1, anti-aliased edges between.
inline Tensor render_filled(const Glyph& g) {
    Tensor img = downsample_coverage(glyph_mask(g));
    for (double& v : img.data) v = 2.0 * v - 1.0;
    return img;
}

/// Outline rendering with inverted background: background +1, a thin contour
/// stroke toward -1. The stroke is the occupancy boundary dilated once on the
/// supersampled grid, giving roughly one-pixel-wide anti-aliased lines.
inline Tensor render_outline(const Glyph& g) {
    const int hi = kGlyphRes * kSuper;
    std::vector<char> mask = glyph_mask(g);
    auto at = [&](const std::vector<char>& m, int x, int y) -> char {
        if (x < 0 || y < 0 || x >= hi || y >= hi) return 0;
        return m[static_cast<std::size_t>(y) * hi + x];
    };
    std::vector<char> edge(mask.size(), 0);
    for (int y = 0; y < hi; ++y)
        for (int x = 0; x < hi; ++x)
            if (at(mask, x, y) &&
                (!at(mask, x - 1, y) || !at(mask, x + 1, y) || !at(mask, x, y - 1) || !at(mask, x, y + 1)))
                edge[static_cast<std::size_t>(y) * hi + x] = 1;
    std::vector<char> stroke(mask.size(), 0);
    for (int y = 0; y < hi; ++y)
        for (int x = 0; x < hi; ++x)
            stroke[static_cast<std::size_t>(y) * hi + x] =
                at(edge, x, y) || at(edge, x - 1, y) || at(edge, x + 1, y) || at(edge, x, y - 1) ||
                at(edge, x, y + 1);
    Tensor img = downsample_coverage(stroke);
    for (double& v : img.data) v = 1.0 - 2.0 * v;
    return img;
}

inline void check_target_count(int m, bool allow_large) {
    if (m > 10) {
        if (!allow_large)
            throw std::invalid_argument(
                "gen_toy_domains: m_target is limited to 10 without the allow-large override");
        std::fprintf(stderr, "warning: generating %d target samples, beyond the few-shot limit of 10\n", m);
    }
}

}  // namespace detail

/// Procedural paired domains for desk-scale translation experiments.
///   shapes — 16 x 16 grayscale glyphs (ellipses / rectangles / triangles with
///            jittered pose). Source: filled, dark background. Target: the same
///            glyph family rendered as outline strokes on an inverted (light)
///            background.
///   moons  — 2-D two-moons point clouds. Source: raw draws. Target: fresh
///            draws mapped through a fixed shift / slight rotation / shrink.
/// Deterministic in (kind, seed, counts); the source set does not depend on
/// m_target. Target sets beyond 10 samples require allow_large_target and log
/// a warning.
inline std::pair<DomainDataset, DomainDataset> gen_toy_domains(DatasetKind kind, std::uint64_t seed,
                                                               int n_source, int m_target,
                                                               bool allow_large_target = false) {
    if (n_source < 1 || m_target < 1) throw std::invalid_argument("gen_toy_domains: counts must be >= 1");
    detail::check_target_count(m_target, allow_large_target);

    RngStream root(seed, 0xDA7A);
    RngStream src_rng = root.child(1);
    RngStream tgt_rng = root.child(2);

    DomainDataset source, target;
    source.domain = "source";
    target.domain = "target";
    target.few_shot = m_target <= 10;

    if (kind == DatasetKind::shapes) {
        source.mode = target.mode = DataMode::image;
        for (int i = 0; i < n_source; ++i) source.items.push_back(detail::render_filled(detail::draw_glyph(src_rng)));
        for (int i = 0; i < m_target; ++i) target.items.push_back(detail::render_outline(detail::draw_glyph(tgt_rng)));
    } else {
        source.mode = target.mode = DataMode::point;
        PointSet src = generate_source(SourceKind::two_moons, n_source, src_rng);
        for (int i = 0; i < src.size(); ++i) source.items.push_back(Tensor({2}, {src.coord(i, 0), src.coord(i, 1)}));
        TargetTransform tf;  // shift (3, -2)
        tf.rotate_deg = 25.0;
        tf.scale = 0.9;
        PointSet tgt = apply_transform(generate_source(SourceKind::two_moons, m_target, tgt_rng), tf);
        for (int i = 0; i < tgt.size(); ++i) target.items.push_back(Tensor({2}, {tgt.coord(i, 0), tgt.coord(i, 1)}));
    }
    return {std::move(source), std::move(target)};
}

}  // namespace fsdm
