#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gaffect::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ')';
    return os.str();
}

/// Row-major float64 n-d array with an optional same-shape gradient slot.
/// Activations are batch-first; images are NHWC.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)), data_(numel(shape_), fill) {}
    Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
        if (data_.size() != numel(shape_))
            throw std::invalid_argument("Tensor: " + std::to_string(data_.size()) + " values for shape " +
                                        nn::to_string(shape_));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Gradient slot, allocated (zeroed) on first mutable access.
    std::span<double> grad() {
        if (grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0);
        return grad_;
    }
    std::span<const double> grad() const noexcept { return grad_; }
    void zero_grad() { grad_.assign(data_.size(), 0.0); }

    /// Same data, new shape of equal element count.
    Tensor reshaped(Shape s) const& {
        Tensor t(std::move(s), data_);
        return t;
    }
    Tensor reshaped(Shape s) && {
        if (numel(s) != data_.size()) throw std::invalid_argument("reshape: element count mismatch");
        shape_ = std::move(s);
        grad_.clear();
        return std::move(*this);
    }

    bool all_finite() const noexcept {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    Shape shape_;
    std::vector<double> data_;
    std::vector<double> grad_;
};

}  // namespace gaffect::nn
