#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaffect/baselines.hpp"
#include "gaffect/config.hpp"
#include "gaffect/dataset.hpp"
#include "gaffect/heatmap.hpp"
#include "gaffect/imageproc.hpp"
#include "gaffect/models.hpp"
#include "gaffect/nn/checkpoint.hpp"
#include "gaffect/nn/model.hpp"
#include "gaffect/report.hpp"
#include "gaffect/rng.hpp"

namespace gaffect {

/// Network input for a record before augmentation and rescale: the heatmap
/// (or raw raster) on a [0, 255] scale, resized to hw x hw.
inline Image prepare_input(const ImageRecord& r, InputKind kind, const std::filesystem::path& base_dir,
                           std::size_t hw) {
    Image full = kind == InputKind::Raw ? load_pixels(r, base_dir)
                                        : heatmap::normalize_to_8bit_range(heatmap::render_record(r, to_kernel(kind)));
    return imageproc::resize(full, hw, hw);
}

struct PreparedSet {
    std::vector<Image> inputs;
    std::vector<int> labels;

    std::size_t size() const noexcept { return inputs.size(); }
};

inline PreparedSet prepare_set(const DatasetManifest& m, InputKind kind, std::size_t hw) {
    PreparedSet s;
    s.inputs.reserve(m.size());
    for (const auto& r : m.records) {
        s.inputs.push_back(prepare_input(r, kind, m.base_dir, hw));
        s.labels.push_back(to_index(r.label));
    }
    return s;
}

/// Stacks images into an (N, H, W, 3) tensor, scaling every value by `scale`.
inline nn::Tensor stack_batch(std::span<const Image* const> images, double scale) {
    if (images.empty()) throw std::invalid_argument("stack_batch: empty batch");
    const std::size_t h = images[0]->height(), w = images[0]->width();
    nn::Tensor t({images.size(), h, w, Image::channels});
    const std::size_t per = h * w * Image::channels;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i]->height() != h || images[i]->width() != w)
            throw std::invalid_argument("stack_batch: mixed image sizes");
        auto v = images[i]->values();
        for (std::size_t k = 0; k < per; ++k) t[i * per + k] = v[k] * scale;
    }
    return t;
}

/// Eval-mode class predictions for a prepared set (inputs rescaled, no augmentation).
inline std::vector<int> predict_set(nn::Sequential& model, const PreparedSet& s, std::size_t batch_size) {
    std::vector<int> out;
    out.reserve(s.size());
    std::vector<const Image*> ptrs;
    for (std::size_t b = 0; b < s.size(); b += batch_size) {
        ptrs.clear();
        for (std::size_t i = b; i < std::min(s.size(), b + batch_size); ++i) ptrs.push_back(&s.inputs[i]);
        const auto pred = nn::argmax_rows(model.forward(stack_batch(ptrs, imageproc::rescale_factor), nn::Mode::Eval));
        out.insert(out.end(), pred.begin(), pred.end());
    }
    return out;
}

inline double accuracy(std::span<const int> truth, std::span<const int> pred) {
    if (truth.empty() || truth.size() != pred.size()) throw std::invalid_argument("accuracy: size mismatch");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == pred[i];
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

/// Batch boundaries for one epoch. A trailing batch of one sample is merged
/// into the previous batch so batch statistics stay defined.
inline std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch_size) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t b = 0; b < n; b += batch_size) out.emplace_back(b, std::min(n, b + batch_size));
    if (out.size() > 1 && out.back().second - out.back().first == 1) {
        out.pop_back();
        out.back().second = n;
    }
    return out;
}

struct Splits {
    DatasetManifest train;
    DatasetManifest holdout;
    DatasetManifest eval;
    std::string eval_set;
};

inline Splits load_splits(const ExperimentConfig& cfg) {
    Splits s;
    DatasetManifest train = load_manifest(cfg.train_manifest);
    for (const auto& r : train.records)
        if (r.split == SplitTag::Holdout)
            throw std::runtime_error("training manifest contains hold-out record '" + r.id + "'");
    if (cfg.holdout_manifest) {
        s.train = std::move(train);
        s.holdout = load_manifest(*cfg.holdout_manifest);
    } else {
        auto [tr, ho] = stratified_split(train, {cfg.holdout_fraction, cfg.seed_data});
        s.train = std::move(tr);
        s.holdout = std::move(ho);
    }
    if (s.train.empty()) throw std::runtime_error("training split is empty");
    if (s.holdout.empty()) throw std::runtime_error("hold-out split is empty");
    if (cfg.eval_manifest) {
        s.eval = load_manifest(*cfg.eval_manifest);
        s.eval_set = "validation";
    } else {
        s.eval = s.holdout;
        s.eval_set = "holdout";
    }
    if (s.eval.empty()) throw std::runtime_error("evaluation set is empty");
    return s;
}

namespace detail {

inline std::vector<Label> to_labels(std::span<const int> idx) {
    std::vector<Label> out;
    for (int i : idx) out.push_back(label_from_index(i));
    return out;
}

inline std::vector<Label> labels_of(const DatasetManifest& m) {
    std::vector<Label> out;
    for (const auto& r : m.records) out.push_back(r.label);
    return out;
}

inline void run_network(const ExperimentConfig& cfg, const Splits& s, RunReport& rep, std::ostream* log) {
    const auto kind = cfg.model == ClassifierKind::ThreeConvNN ? models::ModelKind::ThreeConvNN
                                                               : models::ModelKind::AlexNetVariant;
    nn::Sequential model(models::build(kind, cfg.input_hw, cfg.width_mult), models::input_shape(cfg.input_hw),
                         cfg.seed_init);
    nn::Optimizer opt(cfg.optimizer);

    const PreparedSet train = prepare_set(s.train, cfg.input, cfg.input_hw);
    const PreparedSet holdout = prepare_set(s.holdout, cfg.input, cfg.input_hw);

    std::vector<std::vector<double>> best_state;
    auto snapshot = [&] {
        best_state.clear();
        for (const nn::Tensor* t : model.state_tensors()) best_state.emplace_back(t->values().begin(), t->values().end());
    };
    bool have_best = false;

    std::vector<std::size_t> order(train.size());
    std::vector<Image> augmented;
    std::vector<const Image*> ptrs;
    std::vector<int> labels;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(cfg.seed_augment, 0x5F1EULL, epoch));
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        const std::uint64_t epoch_seed = derive_seed(cfg.seed_augment, epoch);

        double loss_sum = 0.0;
        for (const auto& [b, e] : batch_ranges(order.size(), cfg.batch_size)) {
            augmented.clear();
            ptrs.clear();
            labels.clear();
            for (std::size_t k = b; k < e; ++k) {
                const std::size_t i = order[k];
                if (cfg.augment) {
                    Rng rng(derive_seed(epoch_seed, i));
                    augmented.push_back(
                        imageproc::apply_augment_geometric(train.inputs[i], imageproc::sample_augment(rng, cfg.augment_ranges)));
                }
                labels.push_back(train.labels[i]);
            }
            for (std::size_t k = b; k < e; ++k)
                ptrs.push_back(cfg.augment ? &augmented[k - b] : &train.inputs[order[k]]);
            const double loss = model.train_step(stack_batch(ptrs, imageproc::rescale_factor), labels, opt);
            loss_sum += loss * static_cast<double>(e - b);
        }

        EpochRecord er;
        er.epoch = epoch;
        er.train_loss = loss_sum / static_cast<double>(train.size());
        er.train_accuracy = accuracy(train.labels, predict_set(model, train, cfg.batch_size));
        er.holdout_accuracy = accuracy(holdout.labels, predict_set(model, holdout, cfg.batch_size));
        rep.epochs.push_back(er);
        if (log)
            *log << "epoch " << epoch << "/" << cfg.epochs << "  loss " << er.train_loss << "  train_acc "
                 << er.train_accuracy << "  holdout_acc " << er.holdout_accuracy << '\n';
        if (!have_best || er.holdout_accuracy > rep.best_holdout_accuracy) {
            have_best = true;
            rep.best_epoch = epoch;
            rep.best_holdout_accuracy = er.holdout_accuracy;
            snapshot();
        }
    }

    auto state = model.state_tensors();
    for (std::size_t i = 0; i < state.size(); ++i) std::copy(best_state[i].begin(), best_state[i].end(), state[i]->values().begin());

    rep.train_accuracy = rep.epochs[rep.best_epoch - 1].train_accuracy;
    const PreparedSet eval = s.eval_set == "holdout" ? holdout : prepare_set(s.eval, cfg.input, cfg.input_hw);
    const auto pred = predict_set(model, eval, cfg.batch_size);
    const auto res = evaluate(labels_of(s.eval), to_labels(pred));
    rep.eval_accuracy = res.accuracy;
    rep.confusion = res.confusion;

    std::filesystem::create_directories(cfg.out_dir);
    nn::save_checkpoint(model, cfg.out_dir / "model.nnck");
}

inline void run_baseline(const ExperimentConfig& cfg, const Splits& s, RunReport& rep) {
    const auto train_labels = labels_of(s.train);
    const Label fallback = baselines::majority_label(train_labels);
    std::function<Label(const ImageRecord&)> predict;
    baselines::Forest forest;
    if (cfg.model == ClassifierKind::Averaging) {
        predict = [&](const ImageRecord& r) { return baselines::averaging_predict(r, fallback); };
    } else {
        const auto fs = baselines::mean_features(s.train);
        rep.skipped_faceless = fs.skipped;
        if (fs.x.empty()) throw std::runtime_error("random forest: no training record has faces");
        baselines::ForestSpec spec;
        spec.n_trees = cfg.forest_trees;
        spec.max_depth = cfg.forest_max_depth;
        spec.seed = cfg.seed_init;
        forest = baselines::rf_train(fs.x, fs.y, spec);
        predict = [&](const ImageRecord& r) {
            if (r.faces.empty()) return fallback;
            return baselines::rf_predict(forest, baselines::mean_feature(r).v);
        };
    }
    EpochRecord er;
    er.epoch = 1;
    er.train_accuracy = evaluate(s.train, predict).accuracy;
    er.holdout_accuracy = evaluate(s.holdout, predict).accuracy;
    rep.epochs.push_back(er);
    rep.best_epoch = 1;
    rep.best_holdout_accuracy = er.holdout_accuracy;
    rep.train_accuracy = er.train_accuracy;
    const auto res = evaluate(s.eval, predict);
    rep.eval_accuracy = res.accuracy;
    rep.confusion = res.confusion;
}

}  // namespace detail

/// Runs one configured experiment end to end and writes `report.json` (and,
/// for networks, `model.nnck` holding the best-hold-out epoch) to cfg.out_dir.
/// With `deterministic` set the wall clock is recorded as 0 so that two runs of
/// the same config produce byte-identical outputs.
inline RunReport run_experiment(const ExperimentConfig& cfg, bool deterministic = false, std::ostream* log = nullptr) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const Splits s = load_splits(cfg);

    RunReport rep;
    rep.name = cfg.name;
    rep.model = std::string(to_string(cfg.model));
    rep.kernel = is_network(cfg.model) ? std::string(to_string(cfg.input)) : "-";
    rep.config = to_key_values(cfg);
    rep.eval_set = s.eval_set;
    rep.n_train = s.train.size();
    rep.n_holdout = s.holdout.size();
    rep.n_eval = s.eval.size();

    if (is_network(cfg.model))
        detail::run_network(cfg, s, rep, log);
    else
        detail::run_baseline(cfg, s, rep);

    if (!deterministic)
        rep.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::filesystem::create_directories(cfg.out_dir);
    save_report(rep, cfg.out_dir / "report.json");
    return rep;
}

}  // namespace gaffect
