#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "gaffect/models.hpp"
#include "gaffect/nn/model.hpp"

using namespace gaffect;
using namespace gaffect::nn;
using namespace gaffect::models;

namespace {

std::vector<Shape> spatial_after(const std::vector<LayerSpec>& specs, std::size_t hw, auto pred) {
    const auto shapes = infer_shapes(specs, input_shape(hw));
    std::vector<Shape> out;
    for (std::size_t i = 0; i < specs.size(); ++i)
        if (pred(specs[i])) out.push_back(shapes[i]);
    return out;
}

bool is_conv_or_pool(const LayerSpec& s) {
    return std::holds_alternative<Conv2dSpec>(s) || std::holds_alternative<MaxPoolSpec>(s);
}

}  // namespace

TEST(ThreeConv, ShapesAt256) {
    const auto specs = build_3convnn(256);
    const auto seq = spatial_after(specs, 256, is_conv_or_pool);
    const std::vector<std::size_t> want{254, 127, 125, 62, 60, 30};
    ASSERT_EQ(seq.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        EXPECT_EQ(seq[i][0], want[i]);
        EXPECT_EQ(seq[i][1], want[i]);
    }
    EXPECT_EQ(seq.back(), (Shape{30, 30, 64}));
    EXPECT_EQ(infer_shapes(specs, input_shape(256)).back(), (Shape{3}));
}

TEST(ThreeConv, LayerOrder) {
    const auto specs = build_3convnn();
    std::vector<std::string> names;
    for (const auto& s : specs) names.push_back(describe(s).substr(0, describe(s).find('(')));
    const std::vector<std::string> want{"Conv2d", "ReLU", "MaxPool", "Conv2d", "ReLU", "MaxPool", "Conv2d", "ReLU",
                                        "MaxPool", "Flatten", "Dropout", "Dense", "Softmax"};
    EXPECT_EQ(names, want);
    EXPECT_EQ(std::get<Conv2dSpec>(specs[0]).filters, 32u);
    EXPECT_EQ(std::get<Conv2dSpec>(specs[6]).filters, 64u);
    EXPECT_EQ(std::get<DropoutSpec>(specs[10]).rate, 0.5);
}

TEST(ThreeConv, SmallInputs) {
    EXPECT_EQ(infer_shapes(build_3convnn(32), input_shape(32)).back(), (Shape{3}));
    EXPECT_NO_THROW(build_3convnn(22));
    EXPECT_THROW(build_3convnn(21), std::invalid_argument);
    EXPECT_THROW(build_3convnn(16), std::invalid_argument);
    EXPECT_THROW(build_3convnn(4), std::invalid_argument);
}

TEST(ThreeConv, WidthMultiplierScalesFilters) {
    const auto specs = build_3convnn(64, 0.5);
    EXPECT_EQ(std::get<Conv2dSpec>(specs[0]).filters, 16u);
    EXPECT_EQ(std::get<Conv2dSpec>(specs[6]).filters, 32u);
    EXPECT_EQ(std::get<DenseSpec>(specs[11]).units, 3u);
    EXPECT_THROW(build_3convnn(64, 0.0), std::invalid_argument);
}

TEST(AlexNet, ShapesAt227) {
    const auto specs = build_alexnet_variant(227);
    const auto shapes = infer_shapes(specs, input_shape(227));
    EXPECT_EQ(shapes[0], (Shape{55, 55, 96}));
    EXPECT_EQ(shapes[2], (Shape{27, 27, 96}));
    EXPECT_EQ(shapes.back(), (Shape{3}));
    std::size_t pads = 0, dense = 0;
    for (const auto& s : specs) {
        pads += std::holds_alternative<ZeroPadSpec>(s);
        if (auto* d = std::get_if<DenseSpec>(&s)) {
            ++dense;
            if (dense < 3) {
                EXPECT_EQ(d->units, 4096u);
            }
        }
    }
    EXPECT_EQ(pads, 3u);
    EXPECT_EQ(dense, 3u);
    EXPECT_TRUE(std::holds_alternative<BatchNormSpec>(specs[3]));
}

TEST(AlexNet, SmallestInput) {
    EXPECT_NO_THROW(build_alexnet_variant(67));
    const auto at35 = infer_shapes(build_alexnet_variant(35), input_shape(35));
    EXPECT_EQ(at35.back(), (Shape{3}));
    EXPECT_THROW(build_alexnet_variant(34), std::invalid_argument);
}

TEST(Builders, ArePure) {
    EXPECT_EQ(build_3convnn(64), build_3convnn(64));
    EXPECT_EQ(build_alexnet_variant(99, 0.25), build_alexnet_variant(99, 0.25));
    EXPECT_EQ(build(ModelKind::ThreeConvNN, 48), build_3convnn(48));
}

TEST(Builders, KindStrings) {
    EXPECT_EQ(parse_model_kind("three_conv"), ModelKind::ThreeConvNN);
    EXPECT_EQ(parse_model_kind("alexnet"), ModelKind::AlexNetVariant);
    EXPECT_FALSE(parse_model_kind("vgg"));
    EXPECT_EQ(default_input_hw(ModelKind::ThreeConvNN), 256u);
    EXPECT_EQ(default_input_hw(ModelKind::AlexNetVariant), 227u);
}

TEST(Builders, ParameterCountsMatchFixture) {
    std::ifstream is(std::string(GAFFECT_FIXTURE_DIR) + "/model_params.tsv");
    ASSERT_TRUE(is) << "missing fixture";
    std::string kind;
    std::size_t hw = 0, params = 0, rows = 0;
    while (is >> kind >> hw >> params) {
        const auto k = *parse_model_kind(kind);
        EXPECT_EQ(parameter_count(build(k, hw), input_shape(hw)), params) << kind << " " << hw;
        ++rows;
    }
    EXPECT_EQ(rows, 4u);
}

TEST(Builders, ThreeConvCountClosedForm) {
    const std::size_t want = (27 * 32 + 32) + (288 * 32 + 32) + (288 * 64 + 64) + (30 * 30 * 64 * 3 + 3);
    EXPECT_EQ(want, 201443u);
    EXPECT_EQ(parameter_count(build_3convnn(256), input_shape(256)), want);
}

TEST(Builders, InstantiatedModelMatchesCount) {
    Sequential m(build_3convnn(64), input_shape(64), 0);
    std::size_t n = 0;
    for (Tensor* p : m.parameters()) n += p->size();
    EXPECT_EQ(n, parameter_count(build_3convnn(64), input_shape(64)));
    EXPECT_EQ(m.forward(Tensor({2, 64, 64, 3}), Mode::Eval).shape(), (Shape{2, 3}));
}
