#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gaffect/config.hpp"
#include "gaffect/emotion.hpp"

namespace gaffect {

using ConfusionMatrix = std::array<std::array<std::size_t, num_labels>, num_labels>;  // [true][predicted]

struct EvalResult {
    double accuracy = 0.0;
    ConfusionMatrix confusion{};
    std::size_t total = 0;
};

/// Accuracy and (true, predicted) confusion matrix.
inline EvalResult evaluate(std::span<const Label> truth, std::span<const Label> predicted) {
    if (truth.empty()) throw std::invalid_argument("evaluate: empty set");
    if (truth.size() != predicted.size()) throw std::invalid_argument("evaluate: size mismatch");
    EvalResult r;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ++r.confusion[to_index(truth[i])][to_index(predicted[i])];
        correct += truth[i] == predicted[i];
    }
    r.total = truth.size();
    r.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
    return r;
}

template <class Predict>
EvalResult evaluate(const DatasetManifest& m, Predict&& predict) {
    if (m.empty()) throw std::invalid_argument("evaluate: empty manifest");
    std::vector<Label> truth, pred;
    for (const auto& r : m.records) {
        truth.push_back(r.label);
        pred.push_back(predict(r));
    }
    return evaluate(truth, pred);
}

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double holdout_accuracy = 0.0;
};

inline constexpr int report_schema_version = 1;

struct RunReport {
    std::string name;
    std::string model;   // ClassifierKind string
    std::string kernel;  // InputKind string
    std::map<std::string, std::string> config;
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_holdout_accuracy = 0.0;
    double train_accuracy = 0.0;  // selected model on the training split
    std::string eval_set;         // "validation" or "holdout"
    double eval_accuracy = 0.0;
    ConfusionMatrix confusion{};
    std::size_t n_train = 0;
    std::size_t n_holdout = 0;
    std::size_t n_eval = 0;
    std::size_t skipped_faceless = 0;
    double wall_clock_s = 0.0;
};

inline nlohmann::ordered_json to_json(const RunReport& r) {
    nlohmann::ordered_json j;
    j["schema_version"] = report_schema_version;
    j["name"] = r.name;
    j["model"] = r.model;
    j["kernel"] = r.kernel;
    j["config"] = r.config;
    auto epochs = nlohmann::ordered_json::array();
    for (const auto& e : r.epochs) {
        nlohmann::ordered_json ej;
        ej["epoch"] = e.epoch;
        ej["train_loss"] = e.train_loss;
        ej["train_accuracy"] = e.train_accuracy;
        ej["holdout_accuracy"] = e.holdout_accuracy;
        epochs.push_back(std::move(ej));
    }
    j["epochs"] = std::move(epochs);
    j["best_epoch"] = r.best_epoch;
    j["best_holdout_accuracy"] = r.best_holdout_accuracy;
    j["train_accuracy"] = r.train_accuracy;
    j["eval_set"] = r.eval_set;
    j["eval_accuracy"] = r.eval_accuracy;
    j["class_order"] = {"Positive", "Neutral", "Negative"};
    j["confusion"] = r.confusion;
    j["counts"] = {{"train", r.n_train}, {"holdout", r.n_holdout}, {"eval", r.n_eval}};
    j["skipped_faceless"] = r.skipped_faceless;
    j["wall_clock_s"] = r.wall_clock_s;
    return j;
}

inline RunReport report_from_json(const nlohmann::json& j) {
    if (j.value("schema_version", 0) != report_schema_version)
        throw std::runtime_error("report: unsupported schema_version");
    RunReport r;
    r.name = j.at("name").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.kernel = j.at("kernel").get<std::string>();
    r.config = j.at("config").get<std::map<std::string, std::string>>();
    for (const auto& e : j.at("epochs"))
        r.epochs.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                            e.at("train_accuracy").get<double>(), e.at("holdout_accuracy").get<double>()});
    r.best_epoch = j.at("best_epoch").get<std::size_t>();
    r.best_holdout_accuracy = j.at("best_holdout_accuracy").get<double>();
    r.train_accuracy = j.at("train_accuracy").get<double>();
    r.eval_set = j.at("eval_set").get<std::string>();
    r.eval_accuracy = j.at("eval_accuracy").get<double>();
    r.confusion = j.at("confusion").get<ConfusionMatrix>();
    r.n_train = j.at("counts").at("train").get<std::size_t>();
    r.n_holdout = j.at("counts").at("holdout").get<std::size_t>();
    r.n_eval = j.at("counts").at("eval").get<std::size_t>();
    r.skipped_faceless = j.value("skipped_faceless", std::size_t{0});
    r.wall_clock_s = j.value("wall_clock_s", 0.0);
    return r;
}

inline void save_report(const RunReport& r, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write report: " + path.string());
    os << to_json(r).dump(2) << '\n';
}

inline RunReport load_report(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open report: " + path.string());
    return report_from_json(nlohmann::json::parse(is));
}

/// Every `*.json` report under `dir` (recursive), sorted by path.
inline std::vector<RunReport> load_reports(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<RunReport> out;
    for (const auto& f : files) out.push_back(load_report(f));
    return out;
}

// ---------------------------------------------------------------------------
// Published reference numbers (EmotiW 2017 group affect, train / validation
// accuracy in percent). They come from the full challenge data and are not
// reproducible here; compare_table shows them next to local results.

struct ReferenceRow {
    std::string_view row;
    std::string_view model;   // ClassifierKind string, empty for the organizers' baseline
    std::string_view kernel;  // InputKind string, empty when not applicable
    std::optional<double> train_pct;
    double validation_pct;
};

inline constexpr std::array<ReferenceRow, 10> reference_table{{
    {"Baseline (CENTRIST + SVR)", "", "", std::nullopt, 52.79},
    {"Averaging", "averaging", "", 44.37, 42.38},
    {"Random Forest", "random_forest", "", 99.08, 48.13},
    {"Linear Distribution Heatmaps (3-ConvNN)", "three_conv", "linear", 35.59, 38.62},
    {"Gaussian Heatmaps (3-ConvNN)", "three_conv", "gaussian", 56.73, 51.49},
    {"Gaussian Heatmaps (AlexNet)", "alexnet", "gaussian", 57.81, 55.23},
    {"Normalized Gaussians (3-ConvNN)", "three_conv", "normalized", 56.89, 54.67},
    {"Normalized Gaussians (AlexNet)", "alexnet", "normalized", 54.51, 52.15},
    {"Raw Images (3-ConvNN)", "three_conv", "raw", 54.68, 50.27},
    {"Raw Images (AlexNet)", "alexnet", "raw", 49.57, 44.98},
}};

inline constexpr std::string_view reference_column_label = "published (not reproducible)";

/// Index into reference_table for a report, or reference_table.size() if none matches.
inline std::size_t reference_row_index(const RunReport& r) {
    for (std::size_t i = 0; i < reference_table.size(); ++i) {
        const auto& ref = reference_table[i];
        if (ref.model.empty() || ref.model != r.model) continue;
        if (ref.kernel.empty() || ref.kernel == r.kernel) return i;
    }
    return reference_table.size();
}

namespace detail {

inline std::string pct(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * fraction);
    return buf;
}

inline std::string pct_value(std::optional<double> percent) {
    if (!percent) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", *percent);
    return buf;
}

}  // namespace detail

/// Aligned text table, one row per report, ordered like the reference table
/// (unmatched reports last, then by name). Columns: local train and eval
/// accuracy plus the published train/validation numbers for the matching row.
/// A trailing line carries the organizers' baseline.
inline std::string compare_table(std::span<const RunReport> reports) {
    if (reports.empty()) throw std::invalid_argument("compare_table: no reports");
    std::vector<const RunReport*> order;
    for (const auto& r : reports) order.push_back(&r);
    std::stable_sort(order.begin(), order.end(), [](const RunReport* a, const RunReport* b) {
        const auto ia = reference_row_index(*a), ib = reference_row_index(*b);
        return ia != ib ? ia < ib : a->name < b->name;
    });

    std::vector<std::array<std::string, 6>> rows;
    rows.push_back({"Model", "Run", "Train", "Eval", std::string(reference_column_label) + " train",
                    std::string(reference_column_label) + " validation"});
    for (const RunReport* r : order) {
        const auto i = reference_row_index(*r);
        const bool has_ref = i < reference_table.size();
        rows.push_back({
            has_ref ? std::string(reference_table[i].row) : r->model + " / " + r->kernel,
            r->name,
            detail::pct(r->train_accuracy),
            detail::pct(r->eval_accuracy) + " (" + r->eval_set + ")",
            has_ref ? detail::pct_value(reference_table[i].train_pct) : "-",
            has_ref ? detail::pct_value(reference_table[i].validation_pct) : "-",
        });
    }
    std::array<std::size_t, 6> width{};
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());

    std::ostringstream os;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        for (std::size_t c = 0; c < 6; ++c) {
            if (c + 1 < 6)
                os << std::left << std::setw(static_cast<int>(width[c])) << rows[k][c] << "  ";
            else
                os << rows[k][c];
        }
        os << '\n';
        if (k == 0) {
            std::size_t total = 10;
            for (auto w : width) total += w;
            os << std::string(total, '-') << '\n';
        }
    }
    const auto& base = reference_table[0];
    os << "\n" << base.row << ", " << reference_column_label << ": validation "
       << detail::pct_value(base.validation_pct) << '\n';
    return os.str();
}

}  // namespace gaffect
