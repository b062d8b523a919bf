#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaffect/nn/layers.hpp"
#include "gaffect/nn/optim.hpp"
#include "gaffect/nn/tensor.hpp"
#include "gaffect/rng.hpp"

namespace gaffect::nn {

/// Mean categorical cross entropy of softmax(logits) against integer labels.
/// If `grad` is non-null it receives d(loss)/d(logits) = (probs - onehot) / N.
inline double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* grad = nullptr) {
    if (logits.rank() != 2 || logits.dim(0) != labels.size())
        throw ShapeError("softmax_cross_entropy: logits " + to_string(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (grad) *grad = Tensor(logits.shape());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= k) throw std::invalid_argument("softmax_cross_entropy: label out of range");
        const double* z = logits.data() + i * k;
        double mx = z[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - mx);
        const double log_sum = std::log(sum) + mx;
        total += log_sum - z[y];
        if (grad) {
            for (std::size_t j = 0; j < k; ++j) {
                const double p = std::exp(z[j] - log_sum);
                (*grad)[i * k + j] = (p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) / static_cast<double>(n);
            }
        }
    }
    return total / static_cast<double>(n);
}

/// Sequential stack built from a LayerSpec list.
///
/// A trailing Softmax is not run by forward(): forward() returns logits and
/// training uses the fused softmax/cross-entropy gradient. predict_proba()
/// applies it.
class Sequential {
public:
    Sequential(std::vector<LayerSpec> specs, Shape input_shape, std::uint64_t seed)
        : specs_(std::move(specs)), input_shape_(std::move(input_shape)), seed_(seed) {
        shapes_ = infer_shapes(specs_, input_shape_);
        Rng init(seed_);
        Shape cur = input_shape_;
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            layers_.push_back(make_layer(specs_[i], cur, init, derive_seed(seed_, 0xD50ULL, i)));
            cur = shapes_[i];
        }
        trailing_softmax_ = !specs_.empty() && std::holds_alternative<SoftmaxSpec>(specs_.back());
    }

    const std::vector<LayerSpec>& specs() const noexcept { return specs_; }
    const Shape& input_shape() const noexcept { return input_shape_; }
    const Shape& output_shape() const { return shapes_.back(); }
    std::uint64_t seed() const noexcept { return seed_; }

    Tensor forward(const Tensor& batch, Mode mode) {
        check_input(batch);
        Tensor x = batch;
        const std::size_t n = trailing_softmax_ ? layers_.size() - 1 : layers_.size();
        for (std::size_t i = 0; i < n; ++i) x = layers_[i]->forward(x, mode);
        return x;
    }

    Tensor predict_proba(const Tensor& batch) { return trailing_softmax_ ? softmax(forward(batch, Mode::Eval)) : forward(batch, Mode::Eval); }

    /// Backpropagates d(loss)/d(logits) through the stack (trailing softmax skipped).
    Tensor backward(const Tensor& grad_logits) {
        Tensor g = grad_logits;
        const std::size_t n = trailing_softmax_ ? layers_.size() - 1 : layers_.size();
        for (std::size_t i = n; i-- > 0;) g = layers_[i]->backward(g);
        return g;
    }

    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> out;
        for (auto& l : layers_)
            for (Tensor* p : l->parameters()) out.push_back(p);
        return out;
    }

    /// Parameters followed by non-trainable buffers, in declaration order.
    std::vector<Tensor*> state_tensors() {
        std::vector<Tensor*> out;
        for (auto& l : layers_) {
            for (Tensor* p : l->parameters()) out.push_back(p);
            for (Tensor* b : l->buffers()) out.push_back(b);
        }
        return out;
    }

    void zero_grad() {
        for (Tensor* p : parameters()) p->zero_grad();
    }

    /// One optimization step on a batch; returns the mean loss and writes the
    /// batch logits to `logits_out` if given.
    double train_step(const Tensor& batch, std::span<const int> labels, Optimizer& opt, Tensor* logits_out = nullptr) {
        zero_grad();
        Tensor logits = forward(batch, Mode::Train);
        Tensor grad;
        const double loss = softmax_cross_entropy(logits, labels, &grad);
        backward(grad);
        auto params = parameters();
        opt.step(params);
        if (logits_out) *logits_out = std::move(logits);
        return loss;
    }

    Layer& layer(std::size_t i) { return *layers_.at(i); }
    std::size_t num_layers() const noexcept { return layers_.size(); }

private:
    void check_input(const Tensor& batch) const {
        if (batch.rank() != input_shape_.size() + 1 ||
            !std::equal(input_shape_.begin(), input_shape_.end(), batch.shape().begin() + 1))
            throw ShapeError("Sequential: batch shape " + to_string(batch.shape()) + " does not match input " +
                             to_string(input_shape_));
    }

    std::vector<LayerSpec> specs_;
    Shape input_shape_;
    std::uint64_t seed_;
    std::vector<Shape> shapes_;
    std::vector<std::unique_ptr<Layer>> layers_;
    bool trailing_softmax_ = false;
};

/// Index of the largest entry per row; ties go to the lowest index.
inline std::vector<int> argmax_rows(const Tensor& t) {
    const std::size_t n = t.dim(0), k = t.dim(1);
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (t[i * k + j] > t[i * k + best]) best = j;
        out[i] = static_cast<int>(best);
    }
    return out;
}

}  // namespace gaffect::nn
