// gaffect: command-line front end for datasets, heatmaps, baselines and
// training runs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gaffect/baselines.hpp"
#include "gaffect/config.hpp"
#include "gaffect/dataset.hpp"
#include "gaffect/harness.hpp"
#include "gaffect/heatmap.hpp"
#include "gaffect/imageproc.hpp"
#include "gaffect/report.hpp"

namespace fs = std::filesystem;
using namespace gaffect;

namespace {

std::pair<int, int> parse_size(const std::string& s) {
    const auto x = s.find_first_of("xX");
    if (x == std::string::npos) throw CLI::ValidationError("--size", "expected WxH");
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
}

std::pair<int, int> parse_range(const std::string& s) {
    const auto dots = s.find("..");
    if (dots == std::string::npos) {
        const int v = std::stoi(s);
        return {v, v};
    }
    return {std::stoi(s.substr(0, dots)), std::stoi(s.substr(dots + 2))};
}

void print_eval(std::ostream& os, const EvalResult& r) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", r.accuracy);
    os << "accuracy  " << buf << "  (" << r.total << " records)\n\n";
    os << "true \\ predicted   Positive   Neutral  Negative\n";
    for (Label t : all_labels) {
        std::snprintf(buf, sizeof buf, "%-18s", std::string(to_string(t)).c_str());
        os << buf;
        for (Label p : all_labels) {
            std::snprintf(buf, sizeof buf, "%9zu ", r.confusion[to_index(t)][to_index(p)]);
            os << buf;
        }
        os << '\n';
    }
}

void write_rows(const fs::path& path, const DatasetManifest& m, const std::vector<Label>& pred) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "id\ttrue\tpredicted\n";
    for (std::size_t i = 0; i < m.size(); ++i)
        os << m.records[i].id << '\t' << to_string(m.records[i].label) << '\t' << to_string(pred[i]) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Group affect heatmaps, baselines and CNN training"};
    app.require_subcommand(1);

    // dataset ---------------------------------------------------------------
    auto* dataset = app.add_subcommand("dataset", "Synthetic data and splits");
    dataset->require_subcommand(1);

    auto* gen = dataset->add_subcommand("gen", "Generate a synthetic manifest");
    int per_class = 100;
    std::string size = "64x64", faces = "1..4", gen_out;
    std::uint64_t gen_seed = 0;
    gen->add_option("--per-class", per_class, "Records per class")->check(CLI::PositiveNumber);
    gen->add_option("--size", size, "Image size WxH");
    gen->add_option("--faces", faces, "Faces per image MIN..MAX");
    gen->add_option("--seed", gen_seed, "Generator seed");
    gen->add_option("--out", gen_out, "Output manifest")->required();

    auto* split = dataset->add_subcommand("split", "Stratified train/hold-out split");
    double holdout = 0.10;
    std::uint64_t split_seed = 0;
    std::string split_in, out_train, out_holdout;
    split->add_option("--holdout", holdout, "Hold-out fraction");
    split->add_option("--seed", split_seed, "Shuffle seed");
    split->add_option("--in", split_in, "Input manifest")->required()->check(CLI::ExistingFile);
    split->add_option("--out-train", out_train, "Training manifest")->required();
    split->add_option("--out-holdout", out_holdout, "Hold-out manifest")->required();

    // heatmap ---------------------------------------------------------------
    auto* hm = app.add_subcommand("heatmap", "Heatmap rendering");
    hm->require_subcommand(1);
    auto* render = hm->add_subcommand("render", "Render one tensor file per record");
    std::string render_manifest, kernel = "gaussian", render_dir;
    bool render_png = false;
    render->add_option("--manifest", render_manifest, "Manifest")->required()->check(CLI::ExistingFile);
    render->add_option("--kernel", kernel, "linear|gaussian|normalized")
        ->check(CLI::IsMember({"linear", "gaussian", "normalized"}));
    render->add_option("--out-dir", render_dir, "Output directory")->required();
    render->add_flag("--png", render_png, "Also write PNGs");

    // augment ---------------------------------------------------------------
    auto* aug = app.add_subcommand("augment", "Augmentation tools");
    aug->require_subcommand(1);
    auto* preview = aug->add_subcommand("preview", "Augment a tensor file and write a PNG");
    std::string preview_in, preview_out;
    std::uint64_t preview_seed = 0;
    double preview_rot = imageproc::AugmentRanges{}.rotation_deg;
    preview->add_option("--in", preview_in, "Tensor file")->required()->check(CLI::ExistingFile);
    preview->add_option("--seed", preview_seed, "Sampling seed");
    preview->add_option("--rotation-deg", preview_rot, "Rotation range (+/- degrees)");
    preview->add_option("--out", preview_out, "Output PNG")->required();

    // baseline --------------------------------------------------------------
    auto* base = app.add_subcommand("baseline", "Non-neural baselines");
    base->require_subcommand(1);
    auto* avg = base->add_subcommand("avg", "Averaging baseline");
    std::string avg_manifest, avg_rows;
    avg->add_option("--manifest", avg_manifest, "Manifest")->required()->check(CLI::ExistingFile);
    avg->add_option("--rows", avg_rows, "Write per-record TSV rows");

    auto* rf = base->add_subcommand("rf", "Random forest on mean score vectors");
    std::string rf_train_path, rf_eval_path, rf_rows;
    std::size_t trees = 15, max_depth = 0;
    std::uint64_t rf_seed = 0;
    rf->add_option("--train", rf_train_path, "Training manifest")->required()->check(CLI::ExistingFile);
    rf->add_option("--eval", rf_eval_path, "Evaluation manifest")->required()->check(CLI::ExistingFile);
    rf->add_option("--trees", trees, "Number of trees")->check(CLI::PositiveNumber);
    rf->add_option("--max-depth", max_depth, "Depth limit (0 = unlimited)");
    rf->add_option("--seed", rf_seed, "Forest seed");
    rf->add_option("--rows", rf_rows, "Write per-record TSV rows");

    // run / compare ---------------------------------------------------------
    auto* run = app.add_subcommand("run", "Run one experiment from a config file");
    std::string config_path;
    bool deterministic = false, quiet = false;
    run->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    run->add_flag("--deterministic", deterministic, "Record wall clock as 0 for byte-identical outputs");
    run->add_flag("--quiet", quiet, "No per-epoch log");

    auto* compare = app.add_subcommand("compare", "Tabulate reports next to the published numbers");
    std::string reports_dir;
    compare->add_option("--reports", reports_dir, "Directory of report JSON files")->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto [w, h] = parse_size(size);
            const auto [fmin, fmax] = parse_range(faces);
            SynthOptions o;
            o.per_class = per_class;
            o.width = w;
            o.height = h;
            o.min_faces = fmin;
            o.max_faces = fmax;
            o.seed = gen_seed;
            save_manifest(synth_generate(o), gen_out);
            std::cout << "wrote " << 3 * per_class << " records to " << gen_out << '\n';
        } else if (split->parsed()) {
            const auto m = load_manifest(split_in);
            const auto [tr, ho] = stratified_split(m, {holdout, split_seed});
            save_manifest(tr, out_train);
            save_manifest(ho, out_holdout);
            std::cout << "train " << tr.size() << "  holdout " << ho.size() << '\n';
        } else if (render->parsed()) {
            const auto m = load_manifest(render_manifest);
            const auto k = *heatmap::parse_kernel(kernel);
            fs::create_directories(render_dir);
            for (const auto& r : m.records) {
                const auto t = heatmap::render_record(r, k);
                heatmap::write_tensor_file(t, fs::path(render_dir) / (r.id + ".hmap"));
                if (render_png) heatmap::export_png(t, fs::path(render_dir) / (r.id + ".png"));
            }
            std::cout << "rendered " << m.size() << " heatmaps to " << render_dir << '\n';
        } else if (preview->parsed()) {
            const auto t = heatmap::read_tensor_file(preview_in);
            Rng rng(preview_seed);
            imageproc::AugmentRanges ranges;
            ranges.rotation_deg = preview_rot;
            const auto p = imageproc::sample_augment(rng, ranges);
            heatmap::export_png(imageproc::apply_augment(t, p), preview_out);
            std::cout << "rotation " << p.rotation_deg << "  shift " << p.shift_x_frac << "," << p.shift_y_frac
                      << "  shear " << p.shear << "  zoom " << p.zoom << "  hflip " << p.hflip << '\n';
        } else if (avg->parsed()) {
            const auto m = load_manifest(avg_manifest);
            std::vector<Label> truth, pred;
            for (const auto& r : m.records) truth.push_back(r.label);
            const Label fallback = baselines::majority_label(truth);
            std::size_t faceless = 0;
            for (const auto& r : m.records) {
                faceless += r.faces.empty();
                pred.push_back(baselines::averaging_predict(r, fallback));
            }
            if (faceless)
                std::clog << "warning: " << faceless << " faceless records predicted as " << to_string(fallback)
                          << '\n';
            print_eval(std::cout, evaluate(truth, pred));
            if (!avg_rows.empty()) write_rows(avg_rows, m, pred);
        } else if (rf->parsed()) {
            const auto train = load_manifest(rf_train_path);
            const auto eval = load_manifest(rf_eval_path);
            const auto fs = baselines::mean_features(train);
            if (fs.skipped) std::clog << "warning: skipped " << fs.skipped << " faceless training records\n";
            baselines::ForestSpec spec;
            spec.n_trees = trees;
            spec.seed = rf_seed;
            if (max_depth) spec.max_depth = max_depth;
            const auto forest = baselines::rf_train(fs.x, fs.y, spec);
            const Label fallback = baselines::majority_label(fs.y);
            std::vector<Label> truth, pred;
            for (const auto& r : eval.records) {
                truth.push_back(r.label);
                pred.push_back(r.faces.empty() ? fallback : baselines::rf_predict(forest, baselines::mean_feature(r).v));
            }
            print_eval(std::cout, evaluate(truth, pred));
            if (!rf_rows.empty()) write_rows(rf_rows, eval, pred);
        } else if (run->parsed()) {
            const auto cfg = load_config(config_path);
            const auto rep = run_experiment(cfg, deterministic, quiet ? nullptr : &std::cout);
            std::cout << "best epoch " << rep.best_epoch << "  holdout " << rep.best_holdout_accuracy << "  "
                      << rep.eval_set << " " << rep.eval_accuracy << "\nreport: " << (cfg.out_dir / "report.json").string()
                      << '\n';
        } else if (compare->parsed()) {
            const auto reports = load_reports(reports_dir);
            if (reports.empty()) throw std::runtime_error("no reports under " + reports_dir);
            std::cout << compare_table(reports);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
