#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "gaffect/heatmap.hpp"
#include "gaffect/imageproc.hpp"
#include "gaffect/models.hpp"
#include "gaffect/nn/optim.hpp"

namespace gaffect {

/// What the classifier sees: a heatmap built with one of the kernels, or the raw image.
enum class InputKind { Linear, Gaussian, NormalizedGaussian, Raw };

inline constexpr std::string_view to_string(InputKind k) noexcept {
    switch (k) {
        case InputKind::Linear: return "linear";
        case InputKind::Gaussian: return "gaussian";
        case InputKind::NormalizedGaussian: return "normalized";
        case InputKind::Raw: return "raw";
    }
    return "?";
}

inline std::optional<InputKind> parse_input_kind(std::string_view s) noexcept {
    for (auto k : {InputKind::Linear, InputKind::Gaussian, InputKind::NormalizedGaussian, InputKind::Raw})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

inline heatmap::KernelKind to_kernel(InputKind k) {
    switch (k) {
        case InputKind::Linear: return heatmap::KernelKind::Linear;
        case InputKind::Gaussian: return heatmap::KernelKind::Gaussian;
        case InputKind::NormalizedGaussian: return heatmap::KernelKind::NormalizedGaussian;
        case InputKind::Raw: break;
    }
    throw std::invalid_argument("raw input has no heatmap kernel");
}

enum class ClassifierKind { ThreeConvNN, AlexNetVariant, Averaging, RandomForest };

inline constexpr std::string_view to_string(ClassifierKind k) noexcept {
    switch (k) {
        case ClassifierKind::ThreeConvNN: return "three_conv";
        case ClassifierKind::AlexNetVariant: return "alexnet";
        case ClassifierKind::Averaging: return "averaging";
        case ClassifierKind::RandomForest: return "random_forest";
    }
    return "?";
}

inline std::optional<ClassifierKind> parse_classifier_kind(std::string_view s) noexcept {
    for (auto k : {ClassifierKind::ThreeConvNN, ClassifierKind::AlexNetVariant, ClassifierKind::Averaging,
                   ClassifierKind::RandomForest})
        if (to_string(k) == s) return k;
    if (auto m = models::parse_model_kind(s))
        return *m == models::ModelKind::ThreeConvNN ? ClassifierKind::ThreeConvNN : ClassifierKind::AlexNetVariant;
    return std::nullopt;
}

inline bool is_network(ClassifierKind k) noexcept {
    return k == ClassifierKind::ThreeConvNN || k == ClassifierKind::AlexNetVariant;
}

struct ExperimentConfig {
    std::string name = "run";
    InputKind input = InputKind::Gaussian;
    ClassifierKind model = ClassifierKind::ThreeConvNN;
    std::size_t input_hw = 256;
    double width_mult = 1.0;
    nn::OptimizerSpec optimizer = nn::AdamSpec{};
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double holdout_fraction = 0.10;
    std::uint64_t seed_data = 0;
    std::uint64_t seed_init = 0;
    std::uint64_t seed_augment = 0;
    bool augment = true;
    imageproc::AugmentRanges augment_ranges;
    std::size_t forest_trees = 15;
    std::optional<std::size_t> forest_max_depth;
    std::filesystem::path train_manifest;
    std::optional<std::filesystem::path> holdout_manifest;
    std::optional<std::filesystem::path> eval_manifest;
    std::filesystem::path out_dir = "run_out";

    /// Throws std::invalid_argument on inconsistent settings.
    void validate() const {
        if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
        if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
            throw std::invalid_argument("config: split.holdout must be in (0,1)");
        if (train_manifest.empty()) throw std::invalid_argument("config: paths.train is required");
        if (forest_trees < 1) throw std::invalid_argument("config: forest.trees must be >= 1");
        std::visit([](const auto& s) { nn::validate(s); }, optimizer);
        if (is_network(model)) {
            // Shape algebra rejects inputs too small for the stack.
            models::build(model == ClassifierKind::ThreeConvNN ? models::ModelKind::ThreeConvNN
                                                                : models::ModelKind::AlexNetVariant,
                          input_hw, width_mult);
        }
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw std::invalid_argument("config: " + key + ": cannot parse '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: " + key + ": expected true/false, got '" + v + "'");
}

}  // namespace detail

/// Flat `key = value` text; `#` starts a comment. Unknown keys are errors.
inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(n) + ": expected key = value");
        const std::string key = detail::trim(std::string_view(t).substr(0, eq));
        const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
        if (key.empty()) throw std::invalid_argument("config line " + std::to_string(n) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

/// Builds a config from key/value pairs. Relative paths resolve against `base_dir`.
inline ExperimentConfig config_from_key_values(const std::map<std::string, std::string>& kv,
                                               const std::filesystem::path& base_dir = {}) {
    using detail::parse_number;
    ExperimentConfig c;
    auto path = [&](const std::string& v) {
        std::filesystem::path p(v);
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    // Optimizer defaults depend on the model, so resolve the model first.
    if (auto it = kv.find("model.kind"); it != kv.end()) {
        auto k = parse_classifier_kind(it->second);
        if (!k) throw std::invalid_argument("config: model.kind: unknown '" + it->second + "'");
        c.model = *k;
    }
    if (c.model == ClassifierKind::AlexNetVariant) {
        c.optimizer = nn::SgdSpec{};
        c.input_hw = models::default_input_hw(models::ModelKind::AlexNetVariant);
    }
    if (auto it = kv.find("optimizer.kind"); it != kv.end()) {
        if (it->second == "adam")
            c.optimizer = nn::AdamSpec{};
        else if (it->second == "sgd")
            c.optimizer = nn::SgdSpec{};
        else
            throw std::invalid_argument("config: optimizer.kind: expected adam or sgd");
    }

    for (const auto& [key, v] : kv) {
        if (key == "model.kind" || key == "optimizer.kind") continue;
        if (key == "name") {
            c.name = v;
        } else if (key == "kernel") {
            auto k = parse_input_kind(v);
            if (!k) throw std::invalid_argument("config: kernel: expected linear|gaussian|normalized|raw");
            c.input = *k;
        } else if (key == "model.input_hw") {
            c.input_hw = parse_number<std::size_t>(key, v);
        } else if (key == "model.width_mult") {
            c.width_mult = parse_number<double>(key, v);
        } else if (key == "optimizer.lr") {
            std::visit([&](auto& s) { s.lr = parse_number<double>(key, v); }, c.optimizer);
        } else if (key == "optimizer.beta1" || key == "optimizer.beta2" || key == "optimizer.eps") {
            auto* a = std::get_if<nn::AdamSpec>(&c.optimizer);
            if (!a) throw std::invalid_argument("config: " + key + " requires optimizer.kind = adam");
            const double x = parse_number<double>(key, v);
            (key == "optimizer.beta1" ? a->beta1 : key == "optimizer.beta2" ? a->beta2 : a->eps) = x;
        } else if (key == "optimizer.momentum" || key == "optimizer.weight_decay") {
            auto* s = std::get_if<nn::SgdSpec>(&c.optimizer);
            if (!s) throw std::invalid_argument("config: " + key + " requires optimizer.kind = sgd");
            (key == "optimizer.momentum" ? s->momentum : s->weight_decay) = parse_number<double>(key, v);
        } else if (key == "epochs") {
            c.epochs = parse_number<std::size_t>(key, v);
        } else if (key == "batch_size") {
            c.batch_size = parse_number<std::size_t>(key, v);
        } else if (key == "split.holdout") {
            c.holdout_fraction = parse_number<double>(key, v);
        } else if (key == "seed.data") {
            c.seed_data = parse_number<std::uint64_t>(key, v);
        } else if (key == "seed.init") {
            c.seed_init = parse_number<std::uint64_t>(key, v);
        } else if (key == "seed.augment") {
            c.seed_augment = parse_number<std::uint64_t>(key, v);
        } else if (key == "augment.enabled") {
            c.augment = detail::parse_bool(key, v);
        } else if (key == "augment.rotation_deg") {
            c.augment_ranges.rotation_deg = parse_number<double>(key, v);
        } else if (key == "forest.trees") {
            c.forest_trees = parse_number<std::size_t>(key, v);
        } else if (key == "forest.max_depth") {
            const auto d = parse_number<std::size_t>(key, v);
            c.forest_max_depth = d == 0 ? std::nullopt : std::optional<std::size_t>(d);
        } else if (key == "paths.train") {
            c.train_manifest = path(v);
        } else if (key == "paths.holdout") {
            c.holdout_manifest = path(v);
        } else if (key == "paths.eval") {
            c.eval_manifest = path(v);
        } else if (key == "paths.out_dir") {
            c.out_dir = path(v);
        } else {
            throw std::invalid_argument("config: unknown key '" + key + "'");
        }
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open config: " + file.string());
    return config_from_key_values(parse_key_values(in), file.parent_path());
}

/// Canonical key/value echo of a config (sorted keys), used in reports.
inline std::map<std::string, std::string> to_key_values(const ExperimentConfig& c) {
    auto num = [](double d) {
        char buf[32];
        const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d);
        return std::string(buf, end);
    };
    std::map<std::string, std::string> kv{
        {"name", c.name},
        {"kernel", std::string(to_string(c.input))},
        {"model.kind", std::string(to_string(c.model))},
        {"model.input_hw", std::to_string(c.input_hw)},
        {"model.width_mult", num(c.width_mult)},
        {"epochs", std::to_string(c.epochs)},
        {"batch_size", std::to_string(c.batch_size)},
        {"split.holdout", num(c.holdout_fraction)},
        {"seed.data", std::to_string(c.seed_data)},
        {"seed.init", std::to_string(c.seed_init)},
        {"seed.augment", std::to_string(c.seed_augment)},
        {"augment.enabled", c.augment ? "true" : "false"},
        {"augment.rotation_deg", num(c.augment_ranges.rotation_deg)},
        {"forest.trees", std::to_string(c.forest_trees)},
        {"forest.max_depth", c.forest_max_depth ? std::to_string(*c.forest_max_depth) : "0"},
        {"paths.train", c.train_manifest.generic_string()},
        {"paths.out_dir", c.out_dir.generic_string()},
    };
    if (c.holdout_manifest) kv["paths.holdout"] = c.holdout_manifest->generic_string();
    if (c.eval_manifest) kv["paths.eval"] = c.eval_manifest->generic_string();
    if (const auto* a = std::get_if<nn::AdamSpec>(&c.optimizer)) {
        kv["optimizer.kind"] = "adam";
        kv["optimizer.lr"] = num(a->lr);
        kv["optimizer.beta1"] = num(a->beta1);
        kv["optimizer.beta2"] = num(a->beta2);
        kv["optimizer.eps"] = num(a->eps);
    } else {
        const auto& s = std::get<nn::SgdSpec>(c.optimizer);
        kv["optimizer.kind"] = "sgd";
        kv["optimizer.lr"] = num(s.lr);
        kv["optimizer.momentum"] = num(s.momentum);
        kv["optimizer.weight_decay"] = num(s.weight_decay);
    }
    return kv;
}

}  // namespace gaffect
