#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "gaffect/nn/tensor.hpp"
#include "gaffect/rng.hpp"

namespace gaffect::nn {

enum class Mode { Train, Eval };

// ---------------------------------------------------------------------------
// Declarative layer specs

struct Conv2dSpec {
    std::size_t filters = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    bool operator==(const Conv2dSpec&) const = default;
};
struct MaxPoolSpec {
    std::size_t size = 2;
    std::size_t stride = 2;
    bool operator==(const MaxPoolSpec&) const = default;
};
struct ZeroPadSpec {
    std::size_t size = 1;
    bool operator==(const ZeroPadSpec&) const = default;
};
struct DenseSpec {
    std::size_t units = 0;
    bool operator==(const DenseSpec&) const = default;
};
struct ReLUSpec {
    bool operator==(const ReLUSpec&) const = default;
};
struct DropoutSpec {
    double rate = 0.5;
    bool operator==(const DropoutSpec&) const = default;
};
struct BatchNormSpec {
    bool operator==(const BatchNormSpec&) const = default;
};
struct FlattenSpec {
    bool operator==(const FlattenSpec&) const = default;
};
struct SoftmaxSpec {
    bool operator==(const SoftmaxSpec&) const = default;
};

using LayerSpec = std::variant<Conv2dSpec, MaxPoolSpec, ZeroPadSpec, DenseSpec, ReLUSpec, DropoutSpec, BatchNormSpec,
                               FlattenSpec, SoftmaxSpec>;

inline std::string describe(const LayerSpec& spec) {
    return std::visit(
        [](const auto& s) -> std::string {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, Conv2dSpec>)
                return "Conv2d(" + std::to_string(s.filters) + ", " + std::to_string(s.kernel_h) + "x" +
                       std::to_string(s.kernel_w) + ", s" + std::to_string(s.stride) + ", p" +
                       std::to_string(s.padding) + ")";
            else if constexpr (std::is_same_v<S, MaxPoolSpec>)
                return "MaxPool(" + std::to_string(s.size) + ", s" + std::to_string(s.stride) + ")";
            else if constexpr (std::is_same_v<S, ZeroPadSpec>)
                return "ZeroPad(" + std::to_string(s.size) + ")";
            else if constexpr (std::is_same_v<S, DenseSpec>)
                return "Dense(" + std::to_string(s.units) + ")";
            else if constexpr (std::is_same_v<S, ReLUSpec>)
                return "ReLU";
            else if constexpr (std::is_same_v<S, DropoutSpec>)
                return "Dropout(" + std::to_string(s.rate) + ")";
            else if constexpr (std::is_same_v<S, BatchNormSpec>)
                return "BatchNorm";
            else if constexpr (std::is_same_v<S, FlattenSpec>)
                return "Flatten";
            else
                return "Softmax";
        },
        spec);
}

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Per-sample output shape of one layer (batch dimension excluded).
inline Shape infer_shape(const LayerSpec& spec, const Shape& in) {
    auto fail = [&](const std::string& why) -> Shape {
        throw ShapeError(describe(spec) + " on input " + to_string(in) + ": " + why);
    };
    return std::visit(
        [&](const auto& s) -> Shape {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, Conv2dSpec>) {
                if (in.size() != 3) return fail("expects (H,W,C)");
                if (s.filters == 0 || s.kernel_h == 0 || s.kernel_w == 0 || s.stride == 0)
                    return fail("extents and stride must be positive");
                const std::size_t ph = in[0] + 2 * s.padding;
                const std::size_t pw = in[1] + 2 * s.padding;
                if (s.kernel_h > ph || s.kernel_w > pw) return fail("kernel larger than padded input");
                return {(ph - s.kernel_h) / s.stride + 1, (pw - s.kernel_w) / s.stride + 1, s.filters};
            } else if constexpr (std::is_same_v<S, MaxPoolSpec>) {
                if (in.size() != 3) return fail("expects (H,W,C)");
                if (s.size == 0 || s.stride == 0) return fail("size and stride must be positive");
                if (s.size > in[0] || s.size > in[1]) return fail("pool window larger than input");
                return {(in[0] - s.size) / s.stride + 1, (in[1] - s.size) / s.stride + 1, in[2]};
            } else if constexpr (std::is_same_v<S, ZeroPadSpec>) {
                if (in.size() != 3) return fail("expects (H,W,C)");
                if (s.size == 0) return fail("padding must be positive");
                return {in[0] + 2 * s.size, in[1] + 2 * s.size, in[2]};
            } else if constexpr (std::is_same_v<S, DenseSpec>) {
                if (in.size() != 1) return fail("expects a flat feature vector");
                if (s.units == 0) return fail("units must be positive");
                return {s.units};
            } else if constexpr (std::is_same_v<S, DropoutSpec>) {
                if (!(s.rate >= 0.0 && s.rate < 1.0)) return fail("rate must be in [0,1)");
                return in;
            } else if constexpr (std::is_same_v<S, FlattenSpec>) {
                return {numel(in)};
            } else if constexpr (std::is_same_v<S, SoftmaxSpec>) {
                if (in.size() != 1) return fail("expects a flat vector");
                return in;
            } else {
                if (in.empty()) return fail("empty input shape");
                return in;
            }
        },
        spec);
}

/// Output shape after every layer. Throws ShapeError (naming the layer index)
/// when the stack is invalid for the input.
inline std::vector<Shape> infer_shapes(const std::vector<LayerSpec>& specs, const Shape& input) {
    std::vector<Shape> out;
    out.reserve(specs.size());
    Shape cur = input;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        try {
            cur = infer_shape(specs[i], cur);
        } catch (const ShapeError& e) {
            throw ShapeError("layer " + std::to_string(i) + ": " + e.what());
        }
        out.push_back(cur);
    }
    return out;
}

/// Trainable parameter count (batchnorm running statistics excluded).
inline std::size_t parameter_count(const std::vector<LayerSpec>& specs, const Shape& input) {
    std::size_t total = 0;
    Shape cur = input;
    for (const auto& spec : specs) {
        if (auto* c = std::get_if<Conv2dSpec>(&spec))
            total += c->kernel_h * c->kernel_w * cur.at(2) * c->filters + c->filters;
        else if (auto* d = std::get_if<DenseSpec>(&spec))
            total += cur.at(0) * d->units + d->units;
        else if (std::holds_alternative<BatchNormSpec>(spec))
            total += 2 * cur.back();
        cur = infer_shape(spec, cur);
    }
    return total;
}

// ---------------------------------------------------------------------------
// Layer implementations

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, Mode mode) = 0;
    /// Accumulates parameter gradients and returns the input gradient.
    virtual Tensor backward(const Tensor& grad_out) = 0;
    virtual std::vector<Tensor*> parameters() { return {}; }
    /// Non-trainable state that must be checkpointed (batchnorm running stats).
    virtual std::vector<Tensor*> buffers() { return {}; }

protected:
    void require_forward(const char* name) const {
        if (!has_cache_) throw std::logic_error(std::string(name) + ": backward called before forward");
    }
    bool has_cache_ = false;
};

namespace detail {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

inline void he_uniform(Tensor& w, std::size_t fan_in, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : w.values()) v = rng.uniform(-limit, limit);
}

}  // namespace detail

/// 2-D cross-correlation over NHWC input, weights laid out (KH, KW, Cin, F).
/// Implemented as im2col followed by a matrix product.
class Conv2d final : public Layer {
public:
    Conv2d(const Conv2dSpec& spec, std::size_t in_channels)
        : spec_(spec),
          in_c_(in_channels),
          weight_({spec.kernel_h, spec.kernel_w, in_channels, spec.filters}),
          bias_({spec.filters}) {}

    Conv2d(const Conv2dSpec& spec, std::size_t in_channels, Rng& init) : Conv2d(spec, in_channels) {
        detail::he_uniform(weight_, spec.kernel_h * spec.kernel_w * in_channels, init);
    }

    Tensor& weight() { return weight_; }
    Tensor& bias() { return bias_; }

    Tensor forward(const Tensor& x, Mode) override {
        const auto geo = geometry(x);
        input_ = x;
        has_cache_ = true;
        Tensor out({geo.n, geo.oh, geo.ow, spec_.filters});
        std::vector<double> col(geo.rows * geo.k);
        detail::CMapR w(weight_.data(), static_cast<Eigen::Index>(geo.k), static_cast<Eigen::Index>(spec_.filters));
        Eigen::Map<const Eigen::RowVectorXd> b(bias_.data(), static_cast<Eigen::Index>(spec_.filters));
        for (std::size_t n = 0; n < geo.n; ++n) {
            im2col(x, n, geo, col);
            detail::CMapR c(col.data(), static_cast<Eigen::Index>(geo.rows), static_cast<Eigen::Index>(geo.k));
            detail::MapR o(out.data() + n * geo.rows * spec_.filters, static_cast<Eigen::Index>(geo.rows),
                           static_cast<Eigen::Index>(spec_.filters));
            o.noalias() = c * w;
            o.rowwise() += b;
        }
        return out;
    }

    Tensor backward(const Tensor& grad_out) override {
        require_forward("Conv2d");
        const auto geo = geometry(input_);
        Tensor dx(input_.shape());
        std::vector<double> col(geo.rows * geo.k);
        std::vector<double> dcol(geo.rows * geo.k);
        const auto F = static_cast<Eigen::Index>(spec_.filters);
        detail::CMapR w(weight_.data(), static_cast<Eigen::Index>(geo.k), F);
        detail::MapR dw(weight_.grad().data(), static_cast<Eigen::Index>(geo.k), F);
        Eigen::Map<Eigen::RowVectorXd> db(bias_.grad().data(), F);
        for (std::size_t n = 0; n < geo.n; ++n) {
            im2col(input_, n, geo, col);
            detail::CMapR c(col.data(), static_cast<Eigen::Index>(geo.rows), static_cast<Eigen::Index>(geo.k));
            detail::CMapR g(grad_out.data() + n * geo.rows * spec_.filters, static_cast<Eigen::Index>(geo.rows), F);
            dw.noalias() += c.transpose() * g;
            db += g.colwise().sum();
            detail::MapR dc(dcol.data(), static_cast<Eigen::Index>(geo.rows), static_cast<Eigen::Index>(geo.k));
            dc.noalias() = g * w.transpose();
            col2im(dcol, n, geo, dx);
        }
        return dx;
    }

    std::vector<Tensor*> parameters() override { return {&weight_, &bias_}; }

private:
    struct Geometry {
        std::size_t n, h, w, oh, ow, rows, k;
    };

    Geometry geometry(const Tensor& x) const {
        if (x.rank() != 4 || x.dim(3) != in_c_)
            throw ShapeError("Conv2d: expected NHWC input with " + std::to_string(in_c_) + " channels, got " +
                             to_string(x.shape()));
        const auto out = infer_shape(spec_, {x.dim(1), x.dim(2), x.dim(3)});
        const std::size_t k = spec_.kernel_h * spec_.kernel_w * in_c_;
        return {x.dim(0), x.dim(1), x.dim(2), out[0], out[1], out[0] * out[1], k};
    }

    // Row (oy, ox) of the column matrix holds the receptive field in (ky, kx, c) order.
    void im2col(const Tensor& x, std::size_t n, const Geometry& g, std::vector<double>& col) const {
        const double* src = x.data() + n * g.h * g.w * in_c_;
        const auto pad = static_cast<std::ptrdiff_t>(spec_.padding);
        double* dst = col.data();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
                for (std::size_t ky = 0; ky < spec_.kernel_h; ++ky) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * spec_.stride + ky) - pad;
                    for (std::size_t kx = 0; kx < spec_.kernel_w; ++kx) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * spec_.stride + kx) - pad;
                        if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) ||
                            ix >= static_cast<std::ptrdiff_t>(g.w)) {
                            std::fill_n(dst, in_c_, 0.0);
                        } else {
                            const double* p = src + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * in_c_;
                            std::copy_n(p, in_c_, dst);
                        }
                        dst += in_c_;
                    }
                }
            }
        }
    }

    void col2im(const std::vector<double>& dcol, std::size_t n, const Geometry& g, Tensor& dx) const {
        double* dst = dx.data() + n * g.h * g.w * in_c_;
        const auto pad = static_cast<std::ptrdiff_t>(spec_.padding);
        const double* src = dcol.data();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
                for (std::size_t ky = 0; ky < spec_.kernel_h; ++ky) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * spec_.stride + ky) - pad;
                    for (std::size_t kx = 0; kx < spec_.kernel_w; ++kx) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * spec_.stride + kx) - pad;
                        if (iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                            ix < static_cast<std::ptrdiff_t>(g.w)) {
                            double* p = dst + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * in_c_;
                            for (std::size_t c = 0; c < in_c_; ++c) p[c] += src[c];
                        }
                        src += in_c_;
                    }
                }
            }
        }
    }

    Conv2dSpec spec_;
    std::size_t in_c_;
    Tensor weight_;
    Tensor bias_;
    Tensor input_;
};

/// Windowed max over NHWC. The first maximal element in scan order wins.
class MaxPool final : public Layer {
public:
    explicit MaxPool(const MaxPoolSpec& spec) : spec_(spec) {}

    Tensor forward(const Tensor& x, Mode) override {
        if (x.rank() != 4) throw ShapeError("MaxPool: expected NHWC input, got " + to_string(x.shape()));
        const auto os = infer_shape(spec_, {x.dim(1), x.dim(2), x.dim(3)});
        const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
        in_shape_ = x.shape();
        Tensor out({n, os[0], os[1], c});
        argmax_.assign(out.size(), 0);
        std::size_t o = 0;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t oy = 0; oy < os[0]; ++oy)
                for (std::size_t ox = 0; ox < os[1]; ++ox)
                    for (std::size_t ch = 0; ch < c; ++ch, ++o) {
                        std::size_t best = ((b * h + oy * spec_.stride) * w + ox * spec_.stride) * c + ch;
                        for (std::size_t ky = 0; ky < spec_.size; ++ky)
                            for (std::size_t kx = 0; kx < spec_.size; ++kx) {
                                const std::size_t i =
                                    ((b * h + oy * spec_.stride + ky) * w + ox * spec_.stride + kx) * c + ch;
                                if (x[i] > x[best]) best = i;
                            }
                        out[o] = x[best];
                        argmax_[o] = best;
                    }
        has_cache_ = true;
        return out;
    }

    Tensor backward(const Tensor& grad_out) override {
        require_forward("MaxPool");
        Tensor dx(in_shape_);
        for (std::size_t o = 0; o < grad_out.size(); ++o) dx[argmax_[o]] += grad_out[o];
        return dx;
    }

private:
    MaxPoolSpec spec_;
    Shape in_shape_;
    std::vector<std::size_t> argmax_;
};

class ZeroPad final : public Layer {
public:
    explicit ZeroPad(const ZeroPadSpec& spec) : p_(spec.size) {}

    Tensor forward(const Tensor& x, Mode) override {
        if (x.rank() != 4) throw ShapeError("ZeroPad: expected NHWC input, got " + to_string(x.shape()));
        in_shape_ = x.shape();
        has_cache_ = true;
        const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
        Tensor out({n, h + 2 * p_, w + 2 * p_, c});
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t y = 0; y < h; ++y)
                std::copy_n(x.data() + ((b * h + y) * w) * c, w * c,
                            out.data() + ((b * (h + 2 * p_) + y + p_) * (w + 2 * p_) + p_) * c);
        return out;
    }

    Tensor backward(const Tensor& grad_out) override {
        require_forward("ZeroPad");
        const std::size_t n = in_shape_[0], h = in_shape_[1], w = in_shape_[2], c = in_shape_[3];
        Tensor dx(in_shape_);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t y = 0; y < h; ++y)
                std::copy_n(grad_out.data() + ((b * (h + 2 * p_) + y + p_) * (w + 2 * p_) + p_) * c, w * c,
                            dx.data() + ((b * h + y) * w) * c);
        return dx;
    }

private:
    std::size_t p_;
    Shape in_shape_;
};

/// y = x W + b, W laid out (in, units).
class Dense final : public Layer {
public:
    Dense(const DenseSpec& spec, std::size_t in_features)
        : in_(in_features), units_(spec.units), weight_({in_features, spec.units}), bias_({spec.units}) {}

    Dense(const DenseSpec& spec, std::size_t in_features, Rng& init) : Dense(spec, in_features) {
        detail::he_uniform(weight_, in_features, init);
    }

    Tensor& weight() { return weight_; }
    Tensor& bias() { return bias_; }

    Tensor forward(const Tensor& x, Mode) override {
        if (x.rank() != 2 || x.dim(1) != in_)
            throw ShapeError("Dense: expected (N," + std::to_string(in_) + "), got " + to_string(x.shape()));
        input_ = x;
        has_cache_ = true;
        const auto n = static_cast<Eigen::Index>(x.dim(0));
        Tensor out({x.dim(0), units_});
        detail::CMapR xin(x.data(), n, static_cast<Eigen::Index>(in_));
        detail::CMapR w(weight_.data(), static_cast<Eigen::Index>(in_), static_cast<Eigen::Index>(units_));
        detail::MapR o(out.data(), n, static_cast<Eigen::Index>(units_));
        o.noalias() = xin * w;
        o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_.data(), static_cast<Eigen::Index>(units_));
        return out;
    }

    Tensor backward(const Tensor& grad_out) override {
        require_forward("Dense");
        const auto n = static_cast<Eigen::Index>(input_.dim(0));
        const auto in = static_cast<Eigen::Index>(in_);
        const auto u = static_cast<Eigen::Index>(units_);
        detail::CMapR xin(input_.data(), n, in);
        detail::CMapR g(grad_out.data(), n, u);
        detail::CMapR w(weight_.data(), in, u);
        detail::MapR(weight_.grad().data(), in, u).noalias() += xin.transpose() * g;
        Eigen::Map<Eigen::RowVectorXd>(bias_.grad().data(), u) += g.colwise().sum();
        Tensor dx(input_.shape());
        detail::MapR(dx.data(), n, in).noalias() = g * w.transpose();
        return dx;
    }

    std::vector<Tensor*> parameters() override { return {&weight_, &bias_}; }

private:
    std::size_t in_;
    std::size_t units_;
    Tensor weight_;
    Tensor bias_;
    Tensor input_;
};

class ReLU final : public Layer {
public:
    Tensor forward(const Tensor& x, Mode) override {
        input_ = x;
        has_cache_ = true;
        Tensor out(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
        return out;
    }

    Tensor backward(const Tensor& grad_out) override {
        require_forward("ReLU");
        Tensor dx(input_.shape());
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = input_[i] > 0.0 ? grad_out[i] : 0.0;
        return dx;
    }

private:
    Tensor input_;
};

/// Inverted dropout: in training, kept units are scaled by 1/(1-rate); in
/// evaluation the layer is the identity.
class Dropout final : public Layer {
public:
    Dropout(const DropoutSpec& spec, std::uint64_t seed) : rate_(spec.rate), rng_(seed) {
        if (!(rate_ >= 0.0 && rate_ < 1.0)) throw std::invalid_argument("Dropout: rate must be in [0,1)");
    }

    Tensor forward(const Tensor& x, Mode mode) override {
        has_cache_ = true;
        if (mode == Mode::Eval || rate_ == 0.0) {
            mask_.assign(x.size(), 1.0);
            return x;
        }
        const double keep = 1.0 - rate_;
        mask_.resize(x.size());
        Tensor out(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) {
            mask_[i] = rng_.bernoulli(keep) ? 1.0 / keep : 0.0;
            out[i] = x[i] * mask_[i];
        }
        return out;
    }

    Tensor backward(const Tensor& grad_out) override {
        require_forward("Dropout");
        Tensor dx(grad_out.shape());
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = grad_out[i] * mask_[i];
        return dx;
    }

private:
    double rate_;
    Rng rng_;
    std::vector<double> mask_;
};

/// Per-channel (last axis) batch normalization. Running statistics follow
/// running = momentum * running + (1 - momentum) * batch, with the biased
/// batch variance.
class BatchNorm final : public Layer {
public:
    static constexpr double default_momentum = 0.99;
    static constexpr double default_eps = 1e-5;

    explicit BatchNorm(std::size_t channels, double momentum = default_momentum, double eps = default_eps)
        : c_(channels),
          momentum_(momentum),
          eps_(eps),
          gamma_({channels}, 1.0),
          beta_({channels}, 0.0),
          running_mean_({channels}, 0.0),
          running_var_({channels}, 1.0) {}

    Tensor& gamma() { return gamma_; }
    Tensor& beta() { return beta_; }
    Tensor& running_mean() { return running_mean_; }
    Tensor& running_var() { return running_var_; }

    Tensor forward(const Tensor& x, Mode mode) override {
        if (x.rank() < 2 || x.shape().back() != c_)
            throw ShapeError("BatchNorm: last axis must have " + std::to_string(c_) + " channels, got " +
                             to_string(x.shape()));
        const std::size_t m = x.size() / c_;
        mode_ = mode;
        Tensor out(x.shape());
        if (mode == Mode::Train) {
            if (x.dim(0) < 2) throw std::invalid_argument("BatchNorm: batch of 1 in training mode");
            std::vector<double> mean(c_, 0.0), var(c_, 0.0);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t c = 0; c < c_; ++c) mean[c] += x[i * c_ + c];
            for (double& v : mean) v /= static_cast<double>(m);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t c = 0; c < c_; ++c) {
                    const double d = x[i * c_ + c] - mean[c];
                    var[c] += d * d;
                }
            for (double& v : var) v /= static_cast<double>(m);
            inv_std_.resize(c_);
            for (std::size_t c = 0; c < c_; ++c) {
                inv_std_[c] = 1.0 / std::sqrt(var[c] + eps_);
                running_mean_[c] = momentum_ * running_mean_[c] + (1.0 - momentum_) * mean[c];
                running_var_[c] = momentum_ * running_var_[c] + (1.0 - momentum_) * var[c];
            }
            xhat_ = Tensor(x.shape());
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t c = 0; c < c_; ++c) {
                    const std::size_t k = i * c_ + c;
                    xhat_[k] = (x[k] - mean[c]) * inv_std_[c];
                    out[k] = gamma_[c] * xhat_[k] + beta_[c];
                }
        } else {
            inv_std_.resize(c_);
            for (std::size_t c = 0; c < c_; ++c) inv_std_[c] = 1.0 / std::sqrt(running_var_[c] + eps_);
            xhat_ = Tensor(x.shape());
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t c = 0; c < c_; ++c) {
                    const std::size_t k = i * c_ + c;
                    xhat_[k] = (x[k] - running_mean_[c]) * inv_std_[c];
                    out[k] = gamma_[c] * xhat_[k] + beta_[c];
                }
        }
        has_cache_ = true;
        return out;
    }

    Tensor backward(const Tensor& grad_out) override {
        require_forward("BatchNorm");
        const std::size_t m = grad_out.size() / c_;
        auto dgamma = gamma_.grad();
        auto dbeta = beta_.grad();
        std::vector<double> sum_dy(c_, 0.0), sum_dy_xhat(c_, 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t c = 0; c < c_; ++c) {
                const std::size_t k = i * c_ + c;
                sum_dy[c] += grad_out[k];
                sum_dy_xhat[c] += grad_out[k] * xhat_[k];
            }
        for (std::size_t c = 0; c < c_; ++c) {
            dgamma[c] += sum_dy_xhat[c];
            dbeta[c] += sum_dy[c];
        }
        Tensor dx(grad_out.shape());
        const double md = static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t c = 0; c < c_; ++c) {
                const std::size_t k = i * c_ + c;
                if (mode_ == Mode::Train)
                    dx[k] = gamma_[c] * inv_std_[c] / md *
                            (md * grad_out[k] - sum_dy[c] - xhat_[k] * sum_dy_xhat[c]);
                else
                    dx[k] = gamma_[c] * inv_std_[c] * grad_out[k];
            }
        return dx;
    }

    std::vector<Tensor*> parameters() override { return {&gamma_, &beta_}; }
    std::vector<Tensor*> buffers() override { return {&running_mean_, &running_var_}; }

private:
    std::size_t c_;
    double momentum_;
    double eps_;
    Tensor gamma_, beta_, running_mean_, running_var_;
    Tensor xhat_;
    std::vector<double> inv_std_;
    Mode mode_ = Mode::Train;
};

class Flatten final : public Layer {
public:
    Tensor forward(const Tensor& x, Mode) override {
        if (x.rank() < 1) throw ShapeError("Flatten: scalar input");
        in_shape_ = x.shape();
        has_cache_ = true;
        const std::size_t n = x.dim(0);
        return x.reshaped({n, n ? x.size() / n : 0});
    }

    Tensor backward(const Tensor& grad_out) override {
        require_forward("Flatten");
        return grad_out.reshaped(in_shape_);
    }

private:
    Shape in_shape_;
};

/// Row-wise softmax over the last axis of an (N, K) tensor.
inline Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("softmax: expected (N,K), got " + to_string(logits.shape()));
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    Tensor out(logits.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const double* z = logits.data() + i * k;
        double* p = out.data() + i * k;
        const double mx = *std::max_element(z, z + k);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += (p[j] = std::exp(z[j] - mx));
        for (std::size_t j = 0; j < k; ++j) p[j] /= sum;
    }
    return out;
}

class Softmax final : public Layer {
public:
    Tensor forward(const Tensor& x, Mode) override {
        output_ = softmax(x);
        has_cache_ = true;
        return output_;
    }

    Tensor backward(const Tensor& grad_out) override {
        require_forward("Softmax");
        const std::size_t n = output_.dim(0), k = output_.dim(1);
        Tensor dx(output_.shape());
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j) dot += grad_out[i * k + j] * output_[i * k + j];
            for (std::size_t j = 0; j < k; ++j) dx[i * k + j] = output_[i * k + j] * (grad_out[i * k + j] - dot);
        }
        return dx;
    }

private:
    Tensor output_;
};

/// Instantiates a layer for a per-sample input shape. Weights are drawn from
/// `init`; dropout masks use their own stream seeded with `dropout_seed`.
inline std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape& in, Rng& init, std::uint64_t dropout_seed) {
    infer_shape(spec, in);
    return std::visit(
        [&](const auto& s) -> std::unique_ptr<Layer> {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, Conv2dSpec>)
                return std::make_unique<Conv2d>(s, in.at(2), init);
            else if constexpr (std::is_same_v<S, MaxPoolSpec>)
                return std::make_unique<MaxPool>(s);
            else if constexpr (std::is_same_v<S, ZeroPadSpec>)
                return std::make_unique<ZeroPad>(s);
            else if constexpr (std::is_same_v<S, DenseSpec>)
                return std::make_unique<Dense>(s, in.at(0), init);
            else if constexpr (std::is_same_v<S, ReLUSpec>)
                return std::make_unique<ReLU>();
            else if constexpr (std::is_same_v<S, DropoutSpec>)
                return std::make_unique<Dropout>(s, dropout_seed);
            else if constexpr (std::is_same_v<S, BatchNormSpec>)
                return std::make_unique<BatchNorm>(in.back());
            else if constexpr (std::is_same_v<S, FlattenSpec>)
                return std::make_unique<Flatten>();
            else
                return std::make_unique<Softmax>();
        },
        spec);
}

}  // namespace gaffect::nn
