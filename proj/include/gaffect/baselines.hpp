#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "gaffect/dataset.hpp"
#include "gaffect/emotion.hpp"
#include "gaffect/rng.hpp"

namespace gaffect::baselines {

class NoFacesError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Componentwise mean of the record's face score vectors.
inline Scores7 mean_feature(const ImageRecord& r) {
    if (r.faces.empty()) throw NoFacesError("record '" + r.id + "' has no faces");
    Scores7 out;
    for (const auto& f : r.faces)
        for (std::size_t k = 0; k < num_emotions; ++k) out.v[k] += f.scores.v[k];
    for (double& v : out.v) v /= static_cast<double>(r.faces.size());
    return out;
}

/// Category of the emotion with the highest mean score. Faceless records
/// return `fallback` if one is given and throw otherwise.
inline Label averaging_predict(const ImageRecord& r, std::optional<Label> fallback = std::nullopt) {
    if (r.faces.empty()) {
        if (fallback) return *fallback;
        throw NoFacesError("record '" + r.id + "' has no faces");
    }
    return baseline_categorize(mean_feature(r));
}

/// Most frequent label; ties go to the lowest class index.
inline Label majority_label(std::span<const Label> labels) {
    std::array<std::size_t, num_labels> counts{};
    for (Label l : labels) ++counts[to_index(l)];
    return label_from_index(static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin()));
}

struct ForestSpec {
    std::size_t n_trees = 15;
    std::optional<std::size_t> max_depth;
    std::optional<std::size_t> features_per_split;  // default: round(sqrt(d))
    bool bootstrap = true;
    std::uint64_t seed = 0;
};

using Row = std::vector<double>;

/// CART classification tree with Gini splits. A sample goes left when
/// feature <= threshold; thresholds are observed training values, so the tree
/// is invariant under strictly increasing per-feature transforms.
class DecisionTree {
public:
    struct Node {
        int feature = -1;  // -1 for leaves
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        std::array<double, num_labels> distribution{};  // class counts reaching the node
    };

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    std::size_t depth() const noexcept { return depth_; }

    std::array<double, num_labels> leaf_distribution(std::span<const double> x) const {
        int i = 0;
        while (nodes_[i].feature >= 0)
            i = x[static_cast<std::size_t>(nodes_[i].feature)] <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
        return nodes_[i].distribution;
    }

    Label predict(std::span<const double> x) const {
        const auto d = leaf_distribution(x);
        return label_from_index(static_cast<int>(std::max_element(d.begin(), d.end()) - d.begin()));
    }

    /// Grows a tree on the given sample indices (duplicates allowed).
    static DecisionTree grow(std::span<const Row> x, std::span<const Label> y, std::vector<std::size_t> sample,
                             std::size_t features_per_split, std::optional<std::size_t> max_depth, Rng& rng) {
        DecisionTree t;
        if (x.empty()) throw std::invalid_argument("DecisionTree: no samples");
        t.dims_ = x[0].size();
        t.build(x, y, sample, 0, sample.size(), 0, std::min(features_per_split, t.dims_), max_depth, rng);
        return t;
    }

private:
    static double gini(const std::array<double, num_labels>& c, double n) {
        if (n <= 0.0) return 0.0;
        double s = 1.0;
        for (double v : c) s -= (v / n) * (v / n);
        return s;
    }

    int build(std::span<const Row> x, std::span<const Label> y, std::vector<std::size_t>& idx, std::size_t begin,
              std::size_t end, std::size_t depth, std::size_t mtry, std::optional<std::size_t> max_depth, Rng& rng) {
        const int id = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        depth_ = std::max(depth_, depth);
        std::array<double, num_labels> counts{};
        for (std::size_t i = begin; i < end; ++i) counts[to_index(y[idx[i]])] += 1.0;
        nodes_[id].distribution = counts;

        const double n = static_cast<double>(end - begin);
        const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0.0; }) <= 1;
        if (pure || end - begin < 2 || (max_depth && depth >= *max_depth)) return id;

        // Random feature order; the first `mtry` are the candidates, the rest
        // are only tried if none of the candidates admits a split.
        std::vector<std::size_t> features(dims_);
        std::iota(features.begin(), features.end(), 0);
        rng.shuffle(std::span<std::size_t>(features));

        struct Best {
            int feature = -1;
            double threshold = 0.0;
            double impurity = 0.0;
        } best;
        std::vector<std::pair<double, Label>> col(end - begin);
        for (std::size_t fi = 0; fi < dims_; ++fi) {
            if (fi >= mtry && best.feature >= 0) break;
            const std::size_t f = features[fi];
            for (std::size_t i = begin; i < end; ++i) col[i - begin] = {x[idx[i]][f], y[idx[i]]};
            std::sort(col.begin(), col.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
            std::array<double, num_labels> left{};
            for (std::size_t i = 0; i + 1 < col.size(); ++i) {
                left[to_index(col[i].second)] += 1.0;
                if (!(col[i].first < col[i + 1].first)) continue;
                const double nl = static_cast<double>(i + 1);
                const double nr = n - nl;
                std::array<double, num_labels> right{};
                for (std::size_t c = 0; c < num_labels; ++c) right[c] = counts[c] - left[c];
                const double imp = (nl * gini(left, nl) + nr * gini(right, nr)) / n;
                if (best.feature < 0 || imp < best.impurity) best = {static_cast<int>(f), col[i].first, imp};
            }
        }
        if (best.feature < 0) return id;

        const auto mid = std::stable_partition(idx.begin() + static_cast<std::ptrdiff_t>(begin),
                                               idx.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t s) {
                                                   return x[s][static_cast<std::size_t>(best.feature)] <= best.threshold;
                                               });
        const auto split = static_cast<std::size_t>(mid - idx.begin());
        nodes_[id].feature = best.feature;
        nodes_[id].threshold = best.threshold;
        const int l = build(x, y, idx, begin, split, depth + 1, mtry, max_depth, rng);
        const int r = build(x, y, idx, split, end, depth + 1, mtry, max_depth, rng);
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }

    std::size_t dims_ = 0;
    std::size_t depth_ = 0;
    std::vector<Node> nodes_;
};

struct Forest {
    std::vector<DecisionTree> trees;
};

inline std::size_t default_features_per_split(std::size_t dims) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(dims)))));
}

/// Trains `n_trees` CART trees, each on its own bootstrap sample with its own
/// generator seeded from spec.seed. Single-class data yields a forest of leaf
/// trees that always predict that class (a warning is logged).
inline Forest rf_train(std::span<const Row> x, std::span<const Label> y, const ForestSpec& spec) {
    if (spec.n_trees < 1) throw std::invalid_argument("rf_train: n_trees must be >= 1");
    if (x.size() != y.size()) throw std::invalid_argument("rf_train: feature/label count mismatch");
    if (x.empty()) throw std::invalid_argument("rf_train: no training samples");
    const std::size_t dims = x[0].size();
    if (dims == 0) throw std::invalid_argument("rf_train: zero-dimensional features");
    for (const auto& row : x)
        if (row.size() != dims) throw std::invalid_argument("rf_train: ragged feature rows");

    std::array<std::size_t, num_labels> present{};
    for (Label l : y) ++present[to_index(l)];
    if (std::count_if(present.begin(), present.end(), [](std::size_t c) { return c > 0; }) < 2)
        std::clog << "warning: rf_train: single-class training data, forest is constant\n";

    const std::size_t mtry = spec.features_per_split.value_or(default_features_per_split(dims));
    if (mtry == 0) throw std::invalid_argument("rf_train: features_per_split must be >= 1");
    Forest forest;
    forest.trees.reserve(spec.n_trees);
    for (std::size_t t = 0; t < spec.n_trees; ++t) {
        Rng rng(derive_seed(spec.seed, t));
        std::vector<std::size_t> sample(x.size());
        if (spec.bootstrap)
            for (auto& s : sample) s = static_cast<std::size_t>(rng.below(x.size()));
        else
            std::iota(sample.begin(), sample.end(), 0);
        forest.trees.push_back(DecisionTree::grow(x, y, std::move(sample), mtry, spec.max_depth, rng));
    }
    return forest;
}

/// Majority vote over trees; ties go to the lowest class index.
inline Label rf_predict(const Forest& forest, std::span<const double> x) {
    std::array<std::size_t, num_labels> votes{};
    for (const auto& t : forest.trees) ++votes[to_index(t.predict(x))];
    return label_from_index(static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin()));
}

/// Mean score vectors and labels of the records that have faces.
struct FeatureSet {
    std::vector<Row> x;
    std::vector<Label> y;
    std::size_t skipped = 0;
};

inline FeatureSet mean_features(const DatasetManifest& m) {
    FeatureSet fs;
    for (const auto& r : m.records) {
        if (r.faces.empty()) {
            ++fs.skipped;
            continue;
        }
        const auto f = mean_feature(r);
        fs.x.emplace_back(f.v.begin(), f.v.end());
        fs.y.push_back(r.label);
    }
    return fs;
}

}  // namespace gaffect::baselines
