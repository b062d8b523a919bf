#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "gaffect/nn/tensor.hpp"

namespace gaffect::nn {

struct AdamSpec {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct SgdSpec {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
};

using OptimizerSpec = std::variant<AdamSpec, SgdSpec>;

inline void validate(const AdamSpec& s) {
    if (!(s.lr > 0.0)) throw std::invalid_argument("Adam: lr must be > 0");
    if (!(s.beta1 >= 0.0 && s.beta1 < 1.0) || !(s.beta2 >= 0.0 && s.beta2 < 1.0))
        throw std::invalid_argument("Adam: betas must be in [0,1)");
    if (!(s.eps > 0.0)) throw std::invalid_argument("Adam: eps must be > 0");
}

inline void validate(const SgdSpec& s) {
    if (!(s.lr > 0.0)) throw std::invalid_argument("SGD: lr must be > 0");
    if (!(s.momentum >= 0.0 && s.momentum < 1.0)) throw std::invalid_argument("SGD: momentum must be in [0,1)");
    if (!(s.weight_decay >= 0.0)) throw std::invalid_argument("SGD: weight decay must be >= 0");
}

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t t = 0;
};

/// One bias-corrected Adam update. A default-constructed state is sized on
/// first use; any other size mismatch is an error.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                      const AdamSpec& spec) {
    if (grads.size() != params.size()) throw std::invalid_argument("adam_step: gradient shape mismatch");
    if (state.t == 0 && state.m.empty() && state.v.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw std::invalid_argument("adam_step: state shape mismatch");
    ++state.t;
    const double c1 = 1.0 - std::pow(spec.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(spec.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = spec.beta1 * state.m[i] + (1.0 - spec.beta1) * g;
        state.v[i] = spec.beta2 * state.v[i] + (1.0 - spec.beta2) * g * g;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] -= spec.lr * m_hat / (std::sqrt(v_hat) + spec.eps);
    }
}

/// v <- momentum * v - lr * (g + weight_decay * theta);  theta <- theta + v.
inline void sgd_step(std::span<double> params, std::span<const double> grads, std::vector<double>& velocity,
                     const SgdSpec& spec) {
    if (grads.size() != params.size()) throw std::invalid_argument("sgd_step: gradient shape mismatch");
    if (velocity.empty()) velocity.assign(params.size(), 0.0);
    if (velocity.size() != params.size()) throw std::invalid_argument("sgd_step: velocity shape mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = spec.momentum * velocity[i] - spec.lr * (grads[i] + spec.weight_decay * params[i]);
        params[i] += velocity[i];
    }
}

/// Applies an OptimizerSpec to a fixed list of parameter tensors, keeping one
/// state slot per tensor.
class Optimizer {
public:
    explicit Optimizer(OptimizerSpec spec) : spec_(spec) {
        std::visit([](const auto& s) { validate(s); }, spec_);
    }

    const OptimizerSpec& spec() const noexcept { return spec_; }

    void step(std::span<Tensor* const> params) {
        if (adam_.empty() && velocity_.empty()) {
            adam_.resize(params.size());
            velocity_.resize(params.size());
        }
        if (adam_.size() != params.size()) throw std::invalid_argument("Optimizer: parameter list changed");
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& p = *params[i];
            std::span<const double> g = p.grad();
            if (const auto* a = std::get_if<AdamSpec>(&spec_))
                adam_step(p.values(), g, adam_[i], *a);
            else
                sgd_step(p.values(), g, velocity_[i], std::get<SgdSpec>(spec_));
        }
    }

private:
    OptimizerSpec spec_;
    std::vector<AdamState> adam_;
    std::vector<std::vector<double>> velocity_;
};

}  // namespace gaffect::nn
