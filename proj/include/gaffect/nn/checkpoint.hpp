#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gaffect/nn/model.hpp"

namespace gaffect::nn {

/// Checkpoint layout (all integers little-endian):
///
///   "NNCK1"
///   u64 seed
///   u32 input rank, u32 extents...
///   u32 layer count, then per layer: u8 kind, kind fields
///       Conv2d  u32 filters, kernel_h, kernel_w, stride, padding
///       MaxPool u32 size, stride
///       ZeroPad u32 size
///       Dense   u32 units
///       Dropout f64 rate (IEEE bits as u64)
///       others  nothing
///   u32 tensor count, then per tensor: u32 rank, u32 extents..., float32 values
///
/// Tensors are the model's parameters and batchnorm buffers in declaration order.
inline constexpr std::string_view checkpoint_magic = "NNCK1";

namespace detail {

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}
    void u8(std::uint8_t v) { os_.put(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) os_.put(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) os_.put(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

private:
    std::ostream& os_;
};

class Reader {
public:
    explicit Reader(std::istream& is) : is_(is) {}
    std::uint8_t u8() { return byte(); }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }

private:
    std::uint8_t byte() {
        const int c = is_.get();
        if (c == std::char_traits<char>::eof()) throw std::runtime_error("checkpoint: truncated file");
        return static_cast<std::uint8_t>(c);
    }
    std::istream& is_;
};

enum class KindTag : std::uint8_t { Conv2d = 1, MaxPool, ZeroPad, Dense, ReLU, Dropout, BatchNorm, Flatten, Softmax };

}  // namespace detail

inline void save_checkpoint(Sequential& model, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path.string());
    detail::Writer w(os);
    os.write(checkpoint_magic.data(), static_cast<std::streamsize>(checkpoint_magic.size()));
    w.u64(model.seed());
    w.u32(static_cast<std::uint32_t>(model.input_shape().size()));
    for (auto e : model.input_shape()) w.u32(static_cast<std::uint32_t>(e));
    w.u32(static_cast<std::uint32_t>(model.specs().size()));
    for (const auto& spec : model.specs()) {
        using detail::KindTag;
        auto u = [&](std::size_t v) { w.u32(static_cast<std::uint32_t>(v)); };
        if (auto* c = std::get_if<Conv2dSpec>(&spec)) {
            w.u8(static_cast<std::uint8_t>(KindTag::Conv2d));
            u(c->filters), u(c->kernel_h), u(c->kernel_w), u(c->stride), u(c->padding);
        } else if (auto* p = std::get_if<MaxPoolSpec>(&spec)) {
            w.u8(static_cast<std::uint8_t>(KindTag::MaxPool));
            u(p->size), u(p->stride);
        } else if (auto* z = std::get_if<ZeroPadSpec>(&spec)) {
            w.u8(static_cast<std::uint8_t>(KindTag::ZeroPad));
            u(z->size);
        } else if (auto* d = std::get_if<DenseSpec>(&spec)) {
            w.u8(static_cast<std::uint8_t>(KindTag::Dense));
            u(d->units);
        } else if (auto* r = std::get_if<DropoutSpec>(&spec)) {
            w.u8(static_cast<std::uint8_t>(KindTag::Dropout));
            w.u64(std::bit_cast<std::uint64_t>(r->rate));
        } else if (std::holds_alternative<ReLUSpec>(spec)) {
            w.u8(static_cast<std::uint8_t>(KindTag::ReLU));
        } else if (std::holds_alternative<BatchNormSpec>(spec)) {
            w.u8(static_cast<std::uint8_t>(KindTag::BatchNorm));
        } else if (std::holds_alternative<FlattenSpec>(spec)) {
            w.u8(static_cast<std::uint8_t>(KindTag::Flatten));
        } else {
            w.u8(static_cast<std::uint8_t>(KindTag::Softmax));
        }
    }
    const auto tensors = model.state_tensors();
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const Tensor* t : tensors) {
        w.u32(static_cast<std::uint32_t>(t->rank()));
        for (auto e : t->shape()) w.u32(static_cast<std::uint32_t>(e));
        for (double v : t->values()) w.f32(static_cast<float>(v));
    }
    if (!os) throw std::runtime_error("error writing checkpoint: " + path.string());
}

inline Sequential load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
    char magic[5];
    if (!is.read(magic, 5) || std::string_view(magic, 5) != checkpoint_magic)
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    detail::Reader r(is);
    const std::uint64_t seed = r.u64();
    Shape input(r.u32());
    for (auto& e : input) e = r.u32();
    std::vector<LayerSpec> specs(r.u32());
    for (auto& spec : specs) {
        using detail::KindTag;
        switch (static_cast<KindTag>(r.u8())) {
            case KindTag::Conv2d: {
                Conv2dSpec c;
                c.filters = r.u32(), c.kernel_h = r.u32(), c.kernel_w = r.u32(), c.stride = r.u32(),
                c.padding = r.u32();
                spec = c;
                break;
            }
            case KindTag::MaxPool: {
                MaxPoolSpec p;
                p.size = r.u32(), p.stride = r.u32();
                spec = p;
                break;
            }
            case KindTag::ZeroPad: spec = ZeroPadSpec{r.u32()}; break;
            case KindTag::Dense: spec = DenseSpec{r.u32()}; break;
            case KindTag::Dropout: spec = DropoutSpec{std::bit_cast<double>(r.u64())}; break;
            case KindTag::ReLU: spec = ReLUSpec{}; break;
            case KindTag::BatchNorm: spec = BatchNormSpec{}; break;
            case KindTag::Flatten: spec = FlattenSpec{}; break;
            case KindTag::Softmax: spec = SoftmaxSpec{}; break;
            default: throw std::runtime_error("checkpoint: unknown layer kind");
        }
    }
    Sequential model(std::move(specs), std::move(input), seed);
    auto tensors = model.state_tensors();
    if (r.u32() != tensors.size()) throw std::runtime_error("checkpoint: tensor count does not match layer stack");
    for (Tensor* t : tensors) {
        Shape s(r.u32());
        for (auto& e : s) e = r.u32();
        if (s != t->shape()) throw std::runtime_error("checkpoint: tensor shape mismatch " + to_string(s));
        for (double& v : t->values()) v = r.f32();
    }
    return model;
}

}  // namespace gaffect::nn
