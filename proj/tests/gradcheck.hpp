#pragma once

// Central finite-difference gradient checks for single layers and for the
// fused softmax / cross-entropy loss.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gaffect/nn/layers.hpp"
#include "gaffect/nn/model.hpp"
#include "gaffect/rng.hpp"

namespace gradcheck {

using gaffect::Rng;
using gaffect::nn::Layer;
using gaffect::nn::Mode;
using gaffect::nn::Shape;
using gaffect::nn::Tensor;

inline constexpr double step = 1e-5;
inline constexpr double tolerance = 1e-4;

/// |a - n| / max(|a|, |n|), with magnitudes below 1e-6 treated as 1e-6 so
/// that entries whose true gradient is zero compare on an absolute scale.
inline double relative_error(double analytic, double numeric) {
    return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
}

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

/// Random values at least `gap` apart in magnitude ordering and at least
/// `gap` away from zero, so max-pool winners and ReLU signs cannot flip
/// under a step of size h.
inline Tensor separated_tensor(Rng& rng, Shape shape, double gap = 0.01) {
    Tensor t(std::move(shape));
    std::vector<double> vals(t.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double mag = gap * static_cast<double>(i + 1);
        vals[i] = (i % 2 ? -mag : mag);
    }
    rng.shuffle(std::span<double>(vals));
    std::copy(vals.begin(), vals.end(), t.values().begin());
    return t;
}

struct Result {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::string worst;
};

/// Checks input and parameter gradients of `layer` for L = sum(out * R).
inline Result check_layer(Layer& layer, Tensor x, Mode mode, Rng& rng) {
    const Tensor probe_out = layer.forward(x, mode);
    const Tensor r = random_tensor(rng, probe_out.shape());
    auto loss = [&](const Tensor& in) {
        const Tensor out = layer.forward(in, mode);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
        return s;
    };

    for (Tensor* p : layer.parameters()) p->zero_grad();
    layer.forward(x, mode);
    const Tensor dx = layer.backward(r);

    Result res;
    auto record = [&](double a, double n, const std::string& where) {
        const double e = relative_error(a, n);
        ++res.checked;
        if (e > res.max_rel_error) {
            res.max_rel_error = e;
            res.worst = where + " analytic " + std::to_string(a) + " numeric " + std::to_string(n);
        }
    };
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + step;
        const double lp = loss(x);
        x[i] = orig - step;
        const double lm = loss(x);
        x[i] = orig;
        record(dx[i], (lp - lm) / (2 * step), "input[" + std::to_string(i) + "]");
    }
    const auto params = layer.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const std::vector<double> g(p.grad().begin(), p.grad().end());
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double orig = p[i];
            p[i] = orig + step;
            const double lp = loss(x);
            p[i] = orig - step;
            const double lm = loss(x);
            p[i] = orig;
            record(g[i], (lp - lm) / (2 * step), "param" + std::to_string(k) + "[" + std::to_string(i) + "]");
        }
    }
    return res;
}

/// Checks d(mean cross-entropy)/d(logits) against finite differences.
inline Result check_softmax_xent(Tensor logits, const std::vector<int>& labels) {
    Tensor grad;
    gaffect::nn::softmax_cross_entropy(logits, labels, &grad);
    Result res;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double orig = logits[i];
        logits[i] = orig + step;
        const double lp = gaffect::nn::softmax_cross_entropy(logits, labels);
        logits[i] = orig - step;
        const double lm = gaffect::nn::softmax_cross_entropy(logits, labels);
        logits[i] = orig;
        const double e = relative_error(grad[i], (lp - lm) / (2 * step));
        ++res.checked;
        if (e > res.max_rel_error) {
            res.max_rel_error = e;
            res.worst = "logit[" + std::to_string(i) + "]";
        }
    }
    return res;
}

/// One named layer family with a generator of random (layer, input) cases.
struct Case {
    std::string name;
    std::function<Result(Rng&)> run_trial;
};

inline std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

/// The layer families covered by the gradient suite; each trial draws a
/// fresh random configuration on tensors no larger than 8x8 spatially.
inline std::vector<Case> standard_cases() {
    using namespace gaffect::nn;
    std::vector<Case> cases;
    cases.push_back({"conv2d", [](Rng& rng) {
                         const std::size_t n = dim(rng, 1, 2), h = dim(rng, 3, 8), w = dim(rng, 3, 8);
                         const std::size_t cin = dim(rng, 1, 3), k = dim(rng, 1, 3);
                         Conv2dSpec s{dim(rng, 1, 4), k, dim(rng, 1, 3), dim(rng, 1, 2), dim(rng, 0, 1)};
                         Conv2d layer(s, cin, rng);
                         for (double& b : layer.bias().values()) b = rng.uniform(-0.5, 0.5);
                         return check_layer(layer, random_tensor(rng, {n, h, w, cin}), Mode::Train, rng);
                     }});
    cases.push_back({"maxpool", [](Rng& rng) {
                         const std::size_t size = dim(rng, 2, 3);
                         MaxPool layer({size, dim(rng, 1, size)});
                         const Shape s{dim(rng, 1, 2), dim(rng, size, 8), dim(rng, size, 8), dim(rng, 1, 3)};
                         return check_layer(layer, separated_tensor(rng, s), Mode::Train, rng);
                     }});
    cases.push_back({"dense", [](Rng& rng) {
                         const std::size_t in = dim(rng, 1, 12);
                         Dense layer({dim(rng, 1, 6)}, in, rng);
                         for (double& b : layer.bias().values()) b = rng.uniform(-0.5, 0.5);
                         return check_layer(layer, random_tensor(rng, {dim(rng, 1, 4), in}), Mode::Train, rng);
                     }});
    cases.push_back({"batchnorm_train", [](Rng& rng) {
                         const std::size_t c = dim(rng, 1, 4);
                         BatchNorm layer(c);
                         for (double& g : layer.gamma().values()) g = rng.uniform(0.5, 1.5);
                         for (double& b : layer.beta().values()) b = rng.uniform(-0.5, 0.5);
                         const Shape s{dim(rng, 2, 4), dim(rng, 1, 4), dim(rng, 1, 4), c};
                         return check_layer(layer, random_tensor(rng, s), Mode::Train, rng);
                     }});
    cases.push_back({"batchnorm_eval", [](Rng& rng) {
                         const std::size_t c = dim(rng, 1, 4);
                         BatchNorm layer(c);
                         for (double& g : layer.gamma().values()) g = rng.uniform(0.5, 1.5);
                         for (double& v : layer.running_mean().values()) v = rng.uniform(-0.5, 0.5);
                         for (double& v : layer.running_var().values()) v = rng.uniform(0.5, 2.0);
                         return check_layer(layer, random_tensor(rng, {dim(rng, 1, 3), c}), Mode::Eval, rng);
                     }});
    cases.push_back({"relu", [](Rng& rng) {
                         ReLU layer;
                         const Shape s{dim(rng, 1, 2), dim(rng, 1, 8), dim(rng, 1, 8), dim(rng, 1, 3)};
                         return check_layer(layer, separated_tensor(rng, s, 0.005), Mode::Train, rng);
                     }});
    cases.push_back({"dropout_eval", [](Rng& rng) {
                         Dropout layer({0.5}, rng.next_u64());
                         return check_layer(layer, random_tensor(rng, {dim(rng, 1, 3), dim(rng, 1, 10)}), Mode::Eval,
                                            rng);
                     }});
    cases.push_back({"zeropad", [](Rng& rng) {
                         ZeroPad layer({dim(rng, 1, 2)});
                         const Shape s{dim(rng, 1, 2), dim(rng, 1, 6), dim(rng, 1, 6), dim(rng, 1, 3)};
                         return check_layer(layer, random_tensor(rng, s), Mode::Train, rng);
                     }});
    cases.push_back({"flatten", [](Rng& rng) {
                         Flatten layer;
                         const Shape s{dim(rng, 1, 2), dim(rng, 1, 4), dim(rng, 1, 4), dim(rng, 1, 3)};
                         return check_layer(layer, random_tensor(rng, s), Mode::Train, rng);
                     }});
    cases.push_back({"softmax", [](Rng& rng) {
                         Softmax layer;
                         return check_layer(layer, random_tensor(rng, {dim(rng, 1, 4), dim(rng, 2, 5)}, -3, 3),
                                            Mode::Train, rng);
                     }});
    cases.push_back({"softmax_xent", [](Rng& rng) {
                         const std::size_t n = dim(rng, 1, 6), k = dim(rng, 2, 5);
                         std::vector<int> labels(n);
                         for (int& l : labels) l = static_cast<int>(rng.below(k));
                         return check_softmax_xent(random_tensor(rng, {n, k}, -4, 4), labels);
                     }});
    return cases;
}

}  // namespace gradcheck
