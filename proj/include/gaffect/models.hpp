#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gaffect/nn/layers.hpp"

namespace gaffect::models {

enum class ModelKind { ThreeConvNN, AlexNetVariant };

inline constexpr std::string_view to_string(ModelKind k) noexcept {
    return k == ModelKind::ThreeConvNN ? "three_conv" : "alexnet";
}

inline std::optional<ModelKind> parse_model_kind(std::string_view s) noexcept {
    if (s == "three_conv" || s == "3convnn") return ModelKind::ThreeConvNN;
    if (s == "alexnet" || s == "alexnet_variant") return ModelKind::AlexNetVariant;
    return std::nullopt;
}

inline constexpr std::size_t default_input_hw(ModelKind k) noexcept {
    return k == ModelKind::ThreeConvNN ? 256 : 227;
}

inline std::size_t scaled(std::size_t units, double width_mult) {
    if (!(width_mult > 0.0)) throw std::invalid_argument("width multiplier must be > 0");
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(units) * width_mult)));
}

inline nn::Shape input_shape(std::size_t input_hw) { return {input_hw, input_hw, 3}; }

namespace detail {

inline std::vector<nn::LayerSpec> checked(std::vector<nn::LayerSpec> specs, std::size_t input_hw, const char* name) {
    try {
        const auto shapes = nn::infer_shapes(specs, input_shape(input_hw));
        if (shapes.back() != nn::Shape{3}) throw nn::ShapeError("final output is not (3,)");
    } catch (const nn::ShapeError& e) {
        throw std::invalid_argument(std::string(name) + ": input " + std::to_string(input_hw) + " too small (" +
                                    e.what() + ")");
    }
    return specs;
}

}  // namespace detail

/// Three conv blocks (3x3 conv + ReLU + 2x2 max pool) with 32, 32, 64
/// filters, then flatten, dropout 0.5 and a 3-way softmax classifier.
inline std::vector<nn::LayerSpec> build_3convnn(std::size_t input_hw = 256, double width_mult = 1.0) {
    using namespace nn;
    std::vector<LayerSpec> s;
    for (std::size_t filters : {32, 32, 64}) {
        s.push_back(Conv2dSpec{.filters = scaled(filters, width_mult), .kernel_h = 3, .kernel_w = 3});
        s.push_back(ReLUSpec{});
        s.push_back(MaxPoolSpec{.size = 2, .stride = 2});
    }
    s.push_back(FlattenSpec{});
    s.push_back(DropoutSpec{0.5});
    s.push_back(DenseSpec{3});
    s.push_back(SoftmaxSpec{});
    return detail::checked(std::move(s), input_hw, "build_3convnn");
}

/// AlexNet-style stack with a single 11x11/4 stem, batchnorm after the first
/// pool, three padded 3x3 convs (384, 384, 256), a second 3/2 pool, and two
/// 4096-unit dense layers with dropout 0.5 before the 3-way softmax.
/// `width_mult` scales every filter and hidden-unit count.
inline std::vector<nn::LayerSpec> build_alexnet_variant(std::size_t input_hw = 227, double width_mult = 1.0) {
    using namespace nn;
    auto w = [&](std::size_t n) { return scaled(n, width_mult); };
    std::vector<LayerSpec> s{
        Conv2dSpec{.filters = w(96), .kernel_h = 11, .kernel_w = 11, .stride = 4},
        ReLUSpec{},
        MaxPoolSpec{.size = 3, .stride = 2},
        BatchNormSpec{},
    };
    for (std::size_t filters : {384, 384, 256}) {
        s.push_back(ZeroPadSpec{1});
        s.push_back(Conv2dSpec{.filters = w(filters), .kernel_h = 3, .kernel_w = 3, .stride = 1});
        s.push_back(ReLUSpec{});
    }
    s.push_back(MaxPoolSpec{.size = 3, .stride = 2});
    s.push_back(FlattenSpec{});
    s.push_back(DenseSpec{w(4096)});
    s.push_back(ReLUSpec{});
    s.push_back(DropoutSpec{0.5});
    s.push_back(DenseSpec{w(4096)});
    s.push_back(ReLUSpec{});
    s.push_back(DropoutSpec{0.5});
    s.push_back(DenseSpec{3});
    s.push_back(SoftmaxSpec{});
    return detail::checked(std::move(s), input_hw, "build_alexnet_variant");
}

inline std::vector<nn::LayerSpec> build(ModelKind kind, std::size_t input_hw, double width_mult = 1.0) {
    return kind == ModelKind::ThreeConvNN ? build_3convnn(input_hw, width_mult)
                                          : build_alexnet_variant(input_hw, width_mult);
}

}  // namespace gaffect::models
