#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "gaffect/image.hpp"
#include "gaffect/rng.hpp"

namespace gaffect::imageproc {

/// Bilinear resize with half-pixel centers: output pixel i samples source
/// coordinate (i + 0.5) * in / out - 0.5, clamped to the valid range.
/// Resizing to the same size is the identity.
inline Image resize(const Image& src, std::size_t out_h, std::size_t out_w) {
    if (src.empty()) throw std::invalid_argument("resize: empty input");
    if (out_h == 0 || out_w == 0) throw std::invalid_argument("resize: zero target dimension");
    if (out_h == src.height() && out_w == src.width()) return src;

    struct Tap {
        std::size_t i0, i1;
        double frac;
    };
    auto taps = [](std::size_t in, std::size_t out) {
        std::vector<Tap> t(out);
        const double scale = static_cast<double>(in) / static_cast<double>(out);
        for (std::size_t i = 0; i < out; ++i) {
            double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
            s = std::clamp(s, 0.0, static_cast<double>(in - 1));
            const auto i0 = static_cast<std::size_t>(std::floor(s));
            const std::size_t i1 = std::min(i0 + 1, in - 1);
            t[i] = {i0, i1, s - static_cast<double>(i0)};
        }
        return t;
    };
    const auto ty = taps(src.height(), out_h);
    const auto tx = taps(src.width(), out_w);

    Image out(out_h, out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        const auto& a = ty[y];
        for (std::size_t x = 0; x < out_w; ++x) {
            const auto& b = tx[x];
            for (std::size_t c = 0; c < Image::channels; ++c) {
                const double top = src.at(a.i0, b.i0, c) * (1.0 - b.frac) + src.at(a.i0, b.i1, c) * b.frac;
                const double bot = src.at(a.i1, b.i0, c) * (1.0 - b.frac) + src.at(a.i1, b.i1, c) * b.frac;
                out.at(y, x, c) = top * (1.0 - a.frac) + bot * a.frac;
            }
        }
    }
    return out;
}

/// Value rescale applied by every augmentation (and to un-augmented inputs).
inline constexpr double rescale_factor = 0.01;

struct AugmentRanges {
    double rotation_deg = 40.0;  // uniform in [-rotation_deg, +rotation_deg]
    double shift_frac = 0.2;
    double shear = 0.2;
    double zoom = 0.2;  // zoom factor uniform in [1 - zoom, 1 + zoom]
    double hflip_probability = 0.5;
};

struct AugmentParams {
    double rotation_deg = 0.0;
    double shift_x_frac = 0.0;
    double shift_y_frac = 0.0;
    double shear = 0.0;
    double zoom = 1.0;
    bool hflip = false;
    double rescale = rescale_factor;

    static AugmentParams identity() { return {}; }
};

inline AugmentParams sample_augment(Rng& rng, const AugmentRanges& ranges = {}) {
    AugmentParams p;
    p.rotation_deg = rng.uniform(-ranges.rotation_deg, ranges.rotation_deg);
    p.shift_x_frac = rng.uniform(-ranges.shift_frac, ranges.shift_frac);
    p.shift_y_frac = rng.uniform(-ranges.shift_frac, ranges.shift_frac);
    p.shear = rng.uniform(-ranges.shear, ranges.shear);
    p.zoom = rng.uniform(1.0 - ranges.zoom, 1.0 + ranges.zoom);
    p.hflip = rng.bernoulli(ranges.hflip_probability);
    return p;
}

/// Geometric part of the augmentation, without the value rescale.
///
/// Each output pixel (x, y) samples the source at
///   src = R(theta) * Sh(shear) * Z(zoom) * (dst - c) + c - (shift_x * W, shift_y * H)
/// with c the center pixel ((W-1)/2, (H-1)/2), R a counter-clockwise (on
/// screen, y down) rotation, Sh = [[1, shear], [0, 1]] and Z = zoom * I.
/// The source is sampled with nearest neighbour; coordinates outside the image
/// are clamped to the edge ("nearest" fill). The horizontal flip, if any, is
/// applied to the warped result.
inline Image apply_augment_geometric(const Image& src, const AugmentParams& p) {
    const std::size_t h = src.height();
    const std::size_t w = src.width();
    const double theta = p.rotation_deg * std::numbers::pi / 180.0;
    const double cs = std::cos(theta);
    const double sn = std::sin(theta);
    // R * Sh * Z
    const double m00 = cs * p.zoom;
    const double m01 = (cs * p.shear - sn) * p.zoom;
    const double m10 = sn * p.zoom;
    const double m11 = (sn * p.shear + cs) * p.zoom;
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    const double tx = p.shift_x_frac * static_cast<double>(w);
    const double ty = p.shift_y_frac * static_cast<double>(h);

    Image out(h, w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            const double sx = m00 * dx + m01 * dy + cx - tx;
            const double sy = m10 * dx + m11 * dy + cy - ty;
            const auto ix = static_cast<std::size_t>(std::clamp(std::floor(sx + 0.5), 0.0, static_cast<double>(w - 1)));
            const auto iy = static_cast<std::size_t>(std::clamp(std::floor(sy + 0.5), 0.0, static_cast<double>(h - 1)));
            const std::size_t ox = p.hflip ? w - 1 - x : x;
            for (std::size_t c = 0; c < Image::channels; ++c) out.at(y, ox, c) = src.at(iy, ix, c);
        }
    }
    return out;
}

inline Image apply_augment(const Image& src, const AugmentParams& p) {
    Image out = apply_augment_geometric(src, p);
    out *= p.rescale;
    return out;
}

}  // namespace gaffect::imageproc
