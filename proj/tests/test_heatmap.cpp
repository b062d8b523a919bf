#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "gaffect/heatmap.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace gaffect;
using namespace gaffect::heatmap;
using testing_support::TempDir;

namespace {

FaceGeometry random_geometry(Rng& rng, double w, double h) {
    return {{rng.uniform(0.0, w), rng.uniform(0.0, h)}, rng.uniform(0.5, 6.0)};
}

AffectTriple random_triple(Rng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

double max_abs_diff(const Image& a, const Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i) m = std::max(m, std::fabs(a.values()[i] - b.values()[i]));
    return m;
}

}  // namespace

TEST(FaceRadius, Examples) {
    EXPECT_DOUBLE_EQ(face_radius(6, 8), 5.0);
    EXPECT_DOUBLE_EQ(face_radius(1, 1), std::sqrt(2.0) / 2.0);
    EXPECT_DOUBLE_EQ(face_radius(50, 120), 65.0);
    EXPECT_THROW(face_radius(0, 3), std::invalid_argument);
    EXPECT_THROW(face_radius(3, -1), std::invalid_argument);
}

TEST(FaceGeometry, BoxCenterAndRadius) {
    const auto g = face_geometry({10, 20, 6, 8, {}});
    EXPECT_DOUBLE_EQ(g.center.x, 13.0);
    EXPECT_DOUBLE_EQ(g.center.y, 24.0);
    EXPECT_DOUBLE_EQ(g.radius, 5.0);
}

TEST(LinearIntensity, Examples) {
    EXPECT_DOUBLE_EQ(linear_intensity(0.7, {3, 4}, {3, 4}), 0.7);
    EXPECT_DOUBLE_EQ(linear_intensity(1.0, {0, 0}, {10, 0}), 1.0);
    EXPECT_NEAR(linear_intensity(1.0, {5, 5}, {35, 45}), 1.0 / 7.0, 1e-15);
}

TEST(GaussianIntensity, Examples) {
    EXPECT_DOUBLE_EQ(gaussian_intensity(0.8, {2, 2}, 3.0, {2, 2}), 0.8);
    EXPECT_NEAR(gaussian_intensity(1.0, {0, 0}, 10.0, {3, 4}), 0.5, 1e-15);
    const double tiny = gaussian_intensity(1.0, {0, 0}, 1.0, {10, 0});
    EXPECT_TRUE(std::isfinite(tiny));
    EXPECT_GT(tiny, 0.0);
    EXPECT_NEAR(tiny / std::ldexp(1.0, -40), 1.0, 1e-12);
}

TEST(GaussianIntensity, HalfMaxLocus) {
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const double r = rng.uniform(0.5, 50.0), i0 = rng.uniform(), th = rng.uniform(0.0, 2 * std::numbers::pi);
        const double dist = std::sqrt(r / 0.4);
        const Point c{rng.uniform(-5, 5), rng.uniform(-5, 5)};
        EXPECT_NEAR(gaussian_intensity(i0, c, r, {c.x + dist * std::cos(th), c.y + dist * std::sin(th)}), i0 / 2, 1e-12);
    }
}

TEST(GaussianIntensity, StrictlyDecreasingInDistance) {
    double prev = gaussian_intensity(1.0, {0, 0}, 4.0, {0, 0});
    for (int k = 1; k < 40; ++k) {
        const double v = gaussian_intensity(1.0, {0, 0}, 4.0, {0.25 * k, 0.1 * k});
        EXPECT_LT(v, prev);
        prev = v;
    }
}

TEST(NormalizedGaussian, Examples) {
    // D = 1: identical to the plain Gaussian.
    const Point ic{200, 200}, fc{260, 280};
    EXPECT_DOUBLE_EQ(center_distance_divisor(fc, ic), 1.0);
    EXPECT_DOUBLE_EQ(normalized_gaussian_intensity(0.9, fc, 7.0, ic, {250, 270}),
                     gaussian_intensity(0.9, fc, 7.0, {250, 270}));
    // D = 5.
    const Point fc5{ic.x + 300, ic.y + 400};
    EXPECT_NEAR(normalized_gaussian_intensity(0.9, fc5, 7.0, ic, {505, 601}),
                gaussian_intensity(0.9, fc5, 7.0, {505, 601}) / 5.0, 1e-15);
    // Face at image center: divisor is the floor.
    EXPECT_DOUBLE_EQ(center_distance_divisor(ic, ic), center_distance_floor);
    const double v = normalized_gaussian_intensity(1.0, ic, 2.0, ic, ic);
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_DOUBLE_EQ(v, 1.0 / center_distance_floor);
}

TEST(Kernels, MatchScalarOracle) {
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) {
        const double i0 = rng.uniform(), r = rng.uniform(0.1, 40.0);
        const Point c{rng.uniform(-50, 150), rng.uniform(-50, 150)};
        const Point ic{rng.uniform(0, 200), rng.uniform(0, 200)};
        const Point p{std::floor(rng.uniform(0, 100)), std::floor(rng.uniform(0, 100))};
        EXPECT_NEAR(linear_intensity(i0, c, p), oracle::linear(i0, c.x, c.y, p.x, p.y), 1e-12);
        EXPECT_NEAR(gaussian_intensity(i0, c, r, p), oracle::gaussian(i0, c.x, c.y, r, p.x, p.y), 1e-12);
        EXPECT_NEAR(normalized_gaussian_intensity(i0, c, r, ic, p),
                    oracle::normalized(i0, c.x, c.y, r, ic.x, ic.y, p.x, p.y), 1e-12);
    }
}

TEST(Kernels, HomogeneousInI0) {
    Rng rng(3);
    for (int i = 0; i < 300; ++i) {
        const double i0 = rng.uniform(), k = rng.uniform(0, 5), r = rng.uniform(0.5, 10);
        const Point c{rng.uniform(0, 20), rng.uniform(0, 20)}, p{rng.uniform(0, 20), rng.uniform(0, 20)}, ic{10, 10};
        EXPECT_NEAR(linear_intensity(k * i0, c, p), k * linear_intensity(i0, c, p), 1e-12);
        EXPECT_NEAR(gaussian_intensity(k * i0, c, r, p), k * gaussian_intensity(i0, c, r, p), 1e-12);
        EXPECT_NEAR(normalized_gaussian_intensity(k * i0, c, r, ic, p),
                    k * normalized_gaussian_intensity(i0, c, r, ic, p), 1e-10);
    }
}

TEST(RenderFace, ZeroTripleGivesZeroTensor) {
    for (auto k : {KernelKind::Linear, KernelKind::Gaussian, KernelKind::NormalizedGaussian}) {
        const auto t = render_face({0, 0, 0}, {{3, 3}, 2.0}, k, 7, 9);
        EXPECT_EQ(t, Image(7, 9));
    }
}

TEST(RenderFace, PositiveOnlyLightsBlue) {
    const auto t = render_face({0, 0, 1}, {{4, 4}, 3.0}, KernelKind::Gaussian, 8, 8);
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) {
            EXPECT_EQ(t.at(y, x, 0), 0.0);
            EXPECT_EQ(t.at(y, x, 1), 0.0);
            EXPECT_GT(t.at(y, x, 2), 0.0);
        }
}

TEST(RenderFace, EveryPixelMatchesOracle) {
    const AffectTriple tr{0.3, 0.6, 0.9};
    const FaceGeometry g{{2.5, 5.0}, 3.2};
    for (auto k : {KernelKind::Linear, KernelKind::Gaussian, KernelKind::NormalizedGaussian}) {
        const auto t = render_face(tr, g, k, 8, 8);
        const std::array<double, 3> i0{tr.negative, tr.neutral, tr.positive};
        for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 8; ++x)
                for (std::size_t c = 0; c < 3; ++c) {
                    const double px = static_cast<double>(x), py = static_cast<double>(y);
                    const double want = k == KernelKind::Linear     ? oracle::linear(i0[c], 2.5, 5.0, px, py)
                                        : k == KernelKind::Gaussian ? oracle::gaussian(i0[c], 2.5, 5.0, 3.2, px, py)
                                                                    : oracle::normalized(i0[c], 2.5, 5.0, 3.2, 4, 4, px, py);
                    EXPECT_NEAR(t.at(y, x, c), want, 1e-12) << "kernel " << to_string(k) << " at " << y << "," << x;
                }
    }
}

TEST(RenderFace, ChannelSeparation) {
    const FaceGeometry g{{3, 3}, 2.0};
    const auto a = render_face({0.2, 0.5, 0.7}, g, KernelKind::Gaussian, 6, 6);
    const auto b = render_face({0.9, 0.5, 0.7}, g, KernelKind::Gaussian, 6, 6);
    for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t x = 0; x < 6; ++x) {
            EXPECT_NE(a.at(y, x, 0), b.at(y, x, 0));
            EXPECT_EQ(a.at(y, x, 1), b.at(y, x, 1));
            EXPECT_EQ(a.at(y, x, 2), b.at(y, x, 2));
        }
}

TEST(RenderFace, NormalizedWithUnitDistanceEqualsGaussian) {
    // 200x200 image, face 100 px from the center.
    const FaceGeometry g{{100, 0}, 9.0};
    const auto a = render_face({0.4, 0.1, 0.8}, g, KernelKind::NormalizedGaussian, 200, 200);
    const auto b = render_face({0.4, 0.1, 0.8}, g, KernelKind::Gaussian, 200, 200);
    EXPECT_EQ(a, b);
}

TEST(RenderFace, InvalidInputs) {
    EXPECT_THROW(render_face({1, 1, 1}, {{1, 1}, 0.0}, KernelKind::Gaussian, 4, 4), std::invalid_argument);
    EXPECT_THROW(render_face({1, 1, 1}, {{1, 1}, 1.0}, KernelKind::Gaussian, 0, 4), std::invalid_argument);
}

TEST(Compose, EmptyIsZero) {
    EXPECT_EQ(compose({}, KernelKind::Linear, 5, 4), Image(5, 4));
}

TEST(Compose, SingleFaceEqualsRender) {
    const FaceInput f{{0.1, 0.2, 0.3}, {{2, 1}, 1.5}};
    for (auto k : {KernelKind::Linear, KernelKind::Gaussian, KernelKind::NormalizedGaussian})
        EXPECT_EQ(compose(std::span(&f, 1), k, 6, 5), render_face(f.triple, f.geometry, k, 6, 5));
}

TEST(Compose, TwoFacesAgainstIndependentAccumulation) {
    const std::vector<FaceInput> faces{{{0.1, 0.2, 0.3}, {{2, 1}, 1.5}}, {{0.7, 0.0, 0.4}, {{6.5, 7.5}, 4.0}}};
    const auto t = compose(faces, KernelKind::Gaussian, 9, 9);
    for (std::size_t y = 0; y < 9; ++y)
        for (std::size_t x = 0; x < 9; ++x) {
            double want[3] = {0, 0, 0};
            for (const auto& f : faces) {
                const double i0[3] = {f.triple.negative, f.triple.neutral, f.triple.positive};
                for (int c = 0; c < 3; ++c)
                    want[c] += oracle::gaussian(i0[c], f.geometry.center.x, f.geometry.center.y, f.geometry.radius,
                                                static_cast<double>(x), static_cast<double>(y));
            }
            for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(t.at(y, x, c), want[c], 1e-12);
        }
}

TEST(Compose, Linearity) {
    Rng rng(4);
    for (int trial = 0; trial < 30; ++trial) {
        const auto h = static_cast<std::size_t>(rng.between(1, 16)), w = static_cast<std::size_t>(rng.between(1, 16));
        std::vector<FaceInput> a, b;
        for (int i = 0, n = static_cast<int>(rng.between(0, 3)); i < n; ++i)
            a.push_back({random_triple(rng), random_geometry(rng, static_cast<double>(w), static_cast<double>(h))});
        for (int i = 0, n = static_cast<int>(rng.between(0, 2)); i < n; ++i)
            b.push_back({random_triple(rng), random_geometry(rng, static_cast<double>(w), static_cast<double>(h))});
        std::vector<FaceInput> both = a;
        both.insert(both.end(), b.begin(), b.end());
        for (auto k : {KernelKind::Linear, KernelKind::Gaussian, KernelKind::NormalizedGaussian}) {
            Image sum = compose(a, k, h, w);
            sum += compose(b, k, h, w);
            EXPECT_LE(max_abs_diff(compose(both, k, h, w), sum), 1e-12);
        }
    }
}

TEST(RenderRecord, UsesBoxGeometryAndAffectMapping) {
    ImageRecord r;
    r.id = "x";
    r.width = 10;
    r.height = 6;
    Scores7 s;
    s[Emotion::Happy] = 0.5;
    s[Emotion::Anger] = 0.8;
    r.faces.push_back({2, 1, 4, 3, s});
    const auto t = render_record(r, KernelKind::Gaussian);
    EXPECT_EQ(t, render_face({0.2, 0.0, 0.5}, {{4.0, 2.5}, 2.5}, KernelKind::Gaussian, 6, 10));
}

TEST(ToRgb8, KnownTwoByTwo) {
    Image t(2, 2);
    t.at(0, 0, 0) = 2.0;    // max
    t.at(0, 1, 1) = 1.0;    // 127.5 -> 128
    t.at(1, 0, 2) = 0.5;    // 63.75 -> 64
    t.at(1, 1, 0) = 0.002;  // 0.255 -> 0
    t.at(1, 1, 1) = 0.006;  // 0.765 -> 1
    const auto px = to_rgb8(t);
    const std::vector<std::uint8_t> want{255, 0, 0, 0, 128, 0, 0, 0, 64, 0, 1, 0};
    EXPECT_EQ(px.bytes, want);
}

TEST(ExportPng, ZeroTensorIsBlack) {
    TempDir dir("png0");
    export_png(Image(3, 5), dir / "z.png");
    const auto px = png::read(dir / "z.png");
    EXPECT_EQ(px.height, 3u);
    EXPECT_EQ(px.width, 5u);
    for (auto b : px.bytes) EXPECT_EQ(b, 0);
}

TEST(ExportPng, SingleChannelStaysSingle) {
    TempDir dir("png1");
    const auto t = render_face({0, 0.7, 0}, {{2, 2}, 2.0}, KernelKind::Gaussian, 5, 5);
    export_png(t, dir / "g.png");
    const auto px = png::read(dir / "g.png");
    for (std::size_t i = 0; i < px.bytes.size(); ++i) {
        if (i % 3 == 1) continue;
        EXPECT_EQ(px.bytes[i], 0);
    }
    EXPECT_EQ(px.bytes[(2 * 5 + 2) * 3 + 1], 255);
    EXPECT_EQ(px.bytes, to_rgb8(t).bytes);
}

TEST(ExportPng, UnwritablePath) {
    EXPECT_THROW(export_png(Image(1, 1), "/nonexistent/dir/x.png"), std::runtime_error);
}

TEST(TensorFile, LayoutAndRoundTrip) {
    TempDir dir("hmap");
    Image t(2, 3);
    for (std::size_t i = 0; i < t.values().size(); ++i) t.values()[i] = 0.25 * static_cast<double>(i);
    write_tensor_file(t, dir / "t.hmap");
    std::ifstream is(dir / "t.hmap", std::ios::binary);
    const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(is), {}};
    ASSERT_EQ(bytes.size(), 5u + 8u + 2 * 3 * 3 * 4u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 5), "HMAP1");
    EXPECT_EQ(bytes[5], 2);
    EXPECT_EQ(bytes[9], 3);
    // Element 1 = 0.25f = 0x3E800000, little-endian.
    EXPECT_EQ(bytes[13 + 4 + 3], 0x3E);
    EXPECT_EQ(bytes[13 + 4 + 2], 0x80);
    EXPECT_EQ(read_tensor_file(dir / "t.hmap"), t);
}

TEST(TensorFile, BadMagic) {
    TempDir dir("hbad");
    std::ofstream(dir / "x.hmap") << "NOPE1aaaaaaaa";
    EXPECT_THROW(read_tensor_file(dir / "x.hmap"), std::runtime_error);
}
