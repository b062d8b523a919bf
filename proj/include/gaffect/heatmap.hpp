#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gaffect/dataset.hpp"
#include "gaffect/emotion.hpp"
#include "gaffect/image.hpp"
#include "gaffect/png.hpp"

namespace gaffect::heatmap {

/// Point in pixel coordinates. Integer values are pixel-corner grid indices;
/// there is no half-pixel offset.
struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct FaceGeometry {
    Point center;
    double radius = 0.0;
};

enum class KernelKind { Linear, Gaussian, NormalizedGaussian };

inline constexpr std::string_view to_string(KernelKind k) noexcept {
    switch (k) {
        case KernelKind::Linear: return "linear";
        case KernelKind::Gaussian: return "gaussian";
        case KernelKind::NormalizedGaussian: return "normalized";
    }
    return "?";
}

inline std::optional<KernelKind> parse_kernel(std::string_view s) noexcept {
    for (auto k : {KernelKind::Linear, KernelKind::Gaussian, KernelKind::NormalizedGaussian})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

/// Floor on the face-to-image-center distance divisor (one pixel at the 0.01 scale).
inline constexpr double center_distance_floor = 0.01;

/// Half the diagonal of the face box.
inline double face_radius(double box_w, double box_h) {
    if (!(box_w > 0.0) || !(box_h > 0.0)) throw std::invalid_argument("face_radius: box dimensions must be positive");
    return std::sqrt(box_w * box_w + box_h * box_h) / 2.0;
}

/// Geometry of a detected face: box center and half-diagonal radius.
inline FaceGeometry face_geometry(const FaceObservation& f) {
    return FaceGeometry{
        .center = {f.x + f.w / 2.0, f.y + f.h / 2.0},
        .radius = face_radius(f.w, f.h),
    };
}

inline Point image_center(std::size_t height, std::size_t width) {
    return {static_cast<double>(width) / 2.0, static_cast<double>(height) / 2.0};
}

/// I0 / d with d the city-block distance scaled by 0.1; I0 at d == 0.
inline double linear_intensity(double i0, Point center, Point p) {
    const double d = 0.1 * (std::abs(p.x - center.x) + std::abs(p.y - center.y));
    return d == 0.0 ? i0 : i0 / d;
}

/// I0 * exp(-4 ln2 * 0.1 * |p - c|^2 / r). The squared distance is divided by
/// r, not r^2.
inline double gaussian_intensity(double i0, Point center, double r, Point p) {
    const double dx = p.x - center.x;
    const double dy = p.y - center.y;
    return i0 * std::exp(-4.0 * std::numbers::ln2 * 0.1 * (dx * dx + dy * dy) / r);
}

/// 0.01 * Euclidean distance between face center and image center, floored.
inline double center_distance_divisor(Point face_center, Point image_center) {
    const double dx = face_center.x - image_center.x;
    const double dy = face_center.y - image_center.y;
    return std::max(0.01 * std::sqrt(dx * dx + dy * dy), center_distance_floor);
}

inline double normalized_gaussian_intensity(double i0, Point face_center, double r, Point image_center, Point p) {
    return gaussian_intensity(i0, face_center, r, p) / center_distance_divisor(face_center, image_center);
}

namespace detail {

template <class Kernel>
void accumulate(HeatmapTensor& out, const AffectTriple& t, Kernel&& unit_kernel) {
    const std::array<double, 3> i0{t.negative, t.neutral, t.positive};
    for (std::size_t y = 0; y < out.height(); ++y) {
        for (std::size_t x = 0; x < out.width(); ++x) {
            const Point p{static_cast<double>(x), static_cast<double>(y)};
            for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) += unit_kernel(i0[c], p);
        }
    }
}

inline void validate(const FaceGeometry& g) {
    if (!(g.radius > 0.0) || !std::isfinite(g.radius)) throw std::invalid_argument("face geometry: radius must be > 0");
}

inline void add_face(HeatmapTensor& out, const AffectTriple& t, const FaceGeometry& g, KernelKind kind, Point img_c) {
    validate(g);
    switch (kind) {
        case KernelKind::Linear:
            accumulate(out, t, [&](double i0, Point p) { return linear_intensity(i0, g.center, p); });
            break;
        case KernelKind::Gaussian:
            accumulate(out, t, [&](double i0, Point p) { return gaussian_intensity(i0, g.center, g.radius, p); });
            break;
        case KernelKind::NormalizedGaussian:
            accumulate(out, t, [&](double i0, Point p) {
                return normalized_gaussian_intensity(i0, g.center, g.radius, img_c, p);
            });
            break;
    }
}

}  // namespace detail

/// Full-image field of one face, one channel per affect component.
inline HeatmapTensor render_face(const AffectTriple& triple, const FaceGeometry& geom, KernelKind kind,
                                 std::size_t height, std::size_t width, Point img_center) {
    if (height == 0 || width == 0) throw std::invalid_argument("render_face: empty image size");
    HeatmapTensor out(height, width);
    detail::add_face(out, triple, geom, kind, img_center);
    return out;
}

inline HeatmapTensor render_face(const AffectTriple& triple, const FaceGeometry& geom, KernelKind kind,
                                 std::size_t height, std::size_t width) {
    return render_face(triple, geom, kind, height, width, image_center(height, width));
}

struct FaceInput {
    AffectTriple triple;
    FaceGeometry geometry;
};

/// Sum of the per-face fields. Faces are accumulated in list order, so the
/// result does not depend on any parallel schedule.
inline HeatmapTensor compose(std::span<const FaceInput> faces, KernelKind kind, std::size_t height,
                             std::size_t width) {
    if (height == 0 || width == 0) throw std::invalid_argument("compose: empty image size");
    HeatmapTensor out(height, width);
    const Point c = image_center(height, width);
    for (const auto& f : faces) detail::add_face(out, f.triple, f.geometry, kind, c);
    return out;
}

/// Heatmap of a manifest record at its native resolution.
inline HeatmapTensor render_record(const ImageRecord& r, KernelKind kind) {
    std::vector<FaceInput> faces;
    faces.reserve(r.faces.size());
    for (const auto& f : r.faces) faces.push_back({to_affect_triple(f.scores), face_geometry(f)});
    return compose(faces, kind, static_cast<std::size_t>(r.height), static_cast<std::size_t>(r.width));
}

/// Per-image max normalization onto [0, 255] without quantization. A zero
/// tensor stays zero. This is the float counterpart of export_png and the
/// scale heatmaps are fed to the networks at.
inline Image normalize_to_8bit_range(const HeatmapTensor& t) {
    double peak = 0.0;
    for (double v : t.values()) peak = std::max(peak, v);
    Image out(t.height(), t.width());
    if (peak <= 0.0) return out;
    auto src = t.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::clamp(src[i] * (255.0 / peak), 0.0, 255.0);
    return out;
}

/// Byte = clamp(floor(v * 255 / max + 0.5), 0, 255) where max is taken over
/// all entries and channels. All-zero input gives all-zero bytes.
inline png::Rgb8 to_rgb8(const HeatmapTensor& t) {
    const Image scaled = normalize_to_8bit_range(t);
    png::Rgb8 out{t.height(), t.width(), {}};
    out.bytes.reserve(scaled.values().size());
    for (double v : scaled.values())
        out.bytes.push_back(static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0)));
    return out;
}

inline void export_png(const HeatmapTensor& t, const std::filesystem::path& path) { png::write(to_rgb8(t), path); }

inline constexpr std::string_view tensor_magic = "HMAP1";

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                       static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    os.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("tensor file: truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

/// "HMAP1", u32 H, u32 W, then H*W*3 little-endian float32, row-major,
/// channels interleaved.
inline void write_tensor_file(const HeatmapTensor& t, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write tensor file: " + path.string());
    os.write(tensor_magic.data(), static_cast<std::streamsize>(tensor_magic.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(t.height()));
    detail::put_u32(os, static_cast<std::uint32_t>(t.width()));
    for (double v : t.values()) detail::put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    if (!os) throw std::runtime_error("error writing tensor file: " + path.string());
}

inline HeatmapTensor read_tensor_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open tensor file: " + path.string());
    char magic[5];
    if (!is.read(magic, 5) || std::string_view(magic, 5) != tensor_magic)
        throw std::runtime_error("tensor file: bad magic in " + path.string());
    const std::uint32_t h = detail::get_u32(is);
    const std::uint32_t w = detail::get_u32(is);
    std::vector<double> data(static_cast<std::size_t>(h) * w * 3);
    for (double& v : data) v = std::bit_cast<float>(detail::get_u32(is));
    return HeatmapTensor(h, w, std::move(data));
}

}  // namespace gaffect::heatmap
