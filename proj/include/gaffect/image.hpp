#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace gaffect {

/// H x W x 3 grid of doubles, row-major, channels interleaved.
///
/// Used for both emotion heatmaps (R = negative, G = neutral, B = positive)
/// and decoded raw images (values in [0, 255]).
class Image {
public:
    static constexpr std::size_t channels = 3;

    Image() = default;
    Image(std::size_t height, std::size_t width, double fill = 0.0)
        : height_(height), width_(width), data_(height * width * channels, fill) {}
    Image(std::size_t height, std::size_t width, std::vector<double> data)
        : height_(height), width_(width), data_(std::move(data)) {
        if (data_.size() != height_ * width_ * channels)
            throw std::invalid_argument("Image: data length does not match H*W*3");
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    bool empty() const noexcept { return data_.empty(); }

    double& at(std::size_t y, std::size_t x, std::size_t c) { return data_[(y * width_ + x) * channels + c]; }
    double at(std::size_t y, std::size_t x, std::size_t c) const { return data_[(y * width_ + x) * channels + c]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    Image& operator+=(const Image& other) {
        if (other.height_ != height_ || other.width_ != width_)
            throw std::invalid_argument("Image::operator+=: shape mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }

    Image& operator*=(double k) {
        for (double& v : data_) v *= k;
        return *this;
    }

    bool operator==(const Image&) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

/// Heatmap channel semantics: R negative, G neutral, B positive.
using HeatmapTensor = Image;

}  // namespace gaffect
