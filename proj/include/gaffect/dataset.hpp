#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gaffect/emotion.hpp"
#include "gaffect/image.hpp"
#include "gaffect/png.hpp"
#include "gaffect/rng.hpp"

namespace gaffect {

/// One detected face: bounding box (top-left origin, x right, y down) and its
/// seven emotion scores.
struct FaceObservation {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
    Scores7 scores;

    bool operator==(const FaceObservation&) const = default;
};

/// Which side of a stratified split a record was assigned to. Training code
/// refuses records tagged Holdout.
enum class SplitTag { Train, Holdout };

struct ImageRecord {
    std::string id;
    int width = 0;
    int height = 0;
    Label label = Label::Positive;
    std::vector<FaceObservation> faces;
    std::optional<std::string> pixels_path;  // PNG, relative to the manifest directory
    std::optional<SplitTag> split;
    std::optional<Image> pixels;  // in-memory raster; not serialized

    /// Serialized fields only; the in-memory raster is ignored.
    bool operator==(const ImageRecord& o) const {
        return id == o.id && width == o.width && height == o.height && label == o.label && faces == o.faces &&
               pixels_path == o.pixels_path && split == o.split;
    }
};

class DatasetManifest {
public:
    std::vector<ImageRecord> records;
    /// Directory that relative pixel paths resolve against. Not part of equality.
    std::filesystem::path base_dir;

    std::array<std::size_t, num_labels> class_counts() const {
        std::array<std::size_t, num_labels> counts{};
        for (const auto& r : records) ++counts[to_index(r.label)];
        return counts;
    }

    std::size_t size() const noexcept { return records.size(); }
    bool empty() const noexcept { return records.empty(); }

    bool operator==(const DatasetManifest& o) const { return records == o.records; }
};

struct SplitSpec {
    double holdout_fraction = 0.10;
    std::uint64_t seed = 0;
};

class ManifestError : public std::runtime_error {
public:
    ManifestError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Checks the record invariants. Returns an empty string when valid, otherwise
/// a message naming the offending field.
inline std::string validate_record(const ImageRecord& r) {
    if (r.id.empty()) return "id: empty";
    if (r.width < 1) return "width: must be >= 1";
    if (r.height < 1) return "height: must be >= 1";
    for (std::size_t i = 0; i < r.faces.size(); ++i) {
        const auto& f = r.faces[i];
        const std::string p = "faces[" + std::to_string(i) + "]";
        if (f.w <= 0) return p + ".w: must be > 0";
        if (f.h <= 0) return p + ".h: must be > 0";
        if (f.x < 0 || f.y < 0 || f.x + f.w > r.width || f.y + f.h > r.height)
            return p + ": box outside image bounds";
        for (std::size_t k = 0; k < num_emotions; ++k) {
            const double s = f.scores.v[k];
            if (!(s >= 0.0 && s <= 1.0)) {
                std::ostringstream os;
                os << p << ".scores7[" << k << "] = " << s << " outside [0,1]";
                return os.str();
            }
        }
    }
    if (r.pixels && (r.pixels->height() != static_cast<std::size_t>(r.height) ||
                     r.pixels->width() != static_cast<std::size_t>(r.width)))
        return "pixels: raster size differs from width/height";
    return {};
}

namespace detail {

inline nlohmann::ordered_json record_to_json(const ImageRecord& r) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["width"] = r.width;
    j["height"] = r.height;
    j["label"] = std::string(to_string(r.label));
    auto faces = nlohmann::ordered_json::array();
    for (const auto& f : r.faces) {
        nlohmann::ordered_json fj;
        fj["x"] = f.x;
        fj["y"] = f.y;
        fj["w"] = f.w;
        fj["h"] = f.h;
        fj["scores7"] = f.scores.v;
        faces.push_back(std::move(fj));
    }
    j["faces"] = std::move(faces);
    if (r.pixels_path) j["pixels_path"] = *r.pixels_path;
    if (r.split) j["split"] = *r.split == SplitTag::Train ? "train" : "holdout";
    return j;
}

inline ImageRecord record_from_json(const nlohmann::json& j, std::size_t line) {
    auto field = [&](const char* name) -> const nlohmann::json& {
        if (!j.contains(name)) throw ManifestError(line, std::string("missing field '") + name + "'");
        return j.at(name);
    };
    auto as_int = [&](const nlohmann::json& v, const std::string& name) {
        if (!v.is_number_integer()) throw ManifestError(line, name + ": expected integer");
        return v.get<int>();
    };
    ImageRecord r;
    const auto& id = field("id");
    if (!id.is_string()) throw ManifestError(line, "id: expected string");
    r.id = id.get<std::string>();
    r.width = as_int(field("width"), "width");
    r.height = as_int(field("height"), "height");
    const auto& label = field("label");
    if (!label.is_string()) throw ManifestError(line, "label: expected string");
    auto parsed = parse_label(label.get<std::string>());
    if (!parsed) throw ManifestError(line, "label: unknown value '" + label.get<std::string>() + "'");
    r.label = *parsed;

    const auto& faces = field("faces");
    if (!faces.is_array()) throw ManifestError(line, "faces: expected array");
    for (std::size_t i = 0; i < faces.size(); ++i) {
        const auto& fj = faces[i];
        const std::string p = "faces[" + std::to_string(i) + "]";
        if (!fj.is_object()) throw ManifestError(line, p + ": expected object");
        FaceObservation f;
        for (const char* k : {"x", "y", "w", "h", "scores7"})
            if (!fj.contains(k)) throw ManifestError(line, p + ": missing field '" + k + "'");
        f.x = as_int(fj.at("x"), p + ".x");
        f.y = as_int(fj.at("y"), p + ".y");
        f.w = as_int(fj.at("w"), p + ".w");
        f.h = as_int(fj.at("h"), p + ".h");
        const auto& sj = fj.at("scores7");
        if (!sj.is_array() || sj.size() != num_emotions)
            throw ManifestError(line, p + ".scores7: expected array of 7 numbers");
        for (std::size_t k = 0; k < num_emotions; ++k) {
            if (!sj[k].is_number()) throw ManifestError(line, p + ".scores7[" + std::to_string(k) + "]: not a number");
            f.scores.v[k] = sj[k].get<double>();
        }
        r.faces.push_back(f);
    }
    if (j.contains("pixels_path") && !j.at("pixels_path").is_null()) {
        if (!j.at("pixels_path").is_string()) throw ManifestError(line, "pixels_path: expected string");
        r.pixels_path = j.at("pixels_path").get<std::string>();
    }
    if (j.contains("split") && !j.at("split").is_null()) {
        const auto s = j.at("split").is_string() ? j.at("split").get<std::string>() : std::string();
        if (s == "train")
            r.split = SplitTag::Train;
        else if (s == "holdout")
            r.split = SplitTag::Holdout;
        else
            throw ManifestError(line, "split: expected \"train\" or \"holdout\"");
    }
    if (auto err = validate_record(r); !err.empty()) throw ManifestError(line, err);
    return r;
}

inline Image quantize_to_8bit(const Image& img) {
    Image out(img.height(), img.width());
    auto src = img.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::clamp(std::floor(src[i] + 0.5), 0.0, 255.0);
    return out;
}

}  // namespace detail

/// Reads a line-delimited manifest. Blank lines are skipped; any invalid record
/// aborts the load with a ManifestError carrying the 1-based line number.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
    DatasetManifest m;
    m.base_dir = path.parent_path();
    std::set<std::string> ids;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ManifestError(line, std::string("malformed JSON: ") + e.what());
        }
        if (!j.is_object()) throw ManifestError(line, "expected a JSON object");
        auto r = detail::record_from_json(j, line);
        if (!ids.insert(r.id).second) throw ManifestError(line, "id: duplicate '" + r.id + "'");
        m.records.push_back(std::move(r));
    }
    return m;
}

/// Writes one JSON object per line. Records holding an in-memory raster but no
/// pixel path get a PNG written to `<stem>_pixels/<id>.png` next to the
/// manifest. Existing relative pixel paths are rebased onto the new location.
inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    const fs::path out_dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    const fs::path src_dir = m.base_dir.empty() ? fs::path(".") : m.base_dir;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write manifest: " + path.string());

    std::set<std::string> ids;
    for (const auto& rec : m.records) {
        if (auto err = validate_record(rec); !err.empty())
            throw std::invalid_argument("save_manifest: record '" + rec.id + "': " + err);
        if (!ids.insert(rec.id).second) throw std::invalid_argument("save_manifest: duplicate id '" + rec.id + "'");
        ImageRecord r = rec;
        if (r.pixels_path) {
            fs::path p(*r.pixels_path);
            if (p.is_relative() && fs::weakly_canonical(src_dir) != fs::weakly_canonical(out_dir))
                r.pixels_path = fs::relative(fs::absolute(src_dir / p), fs::absolute(out_dir)).generic_string();
        } else if (r.pixels) {
            const fs::path rel = fs::path(path.stem().string() + "_pixels") / (r.id + ".png");
            fs::create_directories(out_dir / rel.parent_path());
            const Image q = detail::quantize_to_8bit(*r.pixels);
            png::Rgb8 raster{q.height(), q.width(), {}};
            raster.bytes.reserve(q.values().size());
            for (double v : q.values()) raster.bytes.push_back(static_cast<std::uint8_t>(v));
            png::write(raster, out_dir / rel);
            r.pixels_path = rel.generic_string();
        }
        out << detail::record_to_json(r).dump() << '\n';
    }
    if (!out) throw std::runtime_error("error writing manifest: " + path.string());
}

/// Raster for a record: the in-memory pixels if present, else the PNG at
/// pixels_path resolved against the manifest directory.
inline Image load_pixels(const ImageRecord& r, const std::filesystem::path& base_dir) {
    if (r.pixels) return *r.pixels;
    if (!r.pixels_path) throw std::runtime_error("record '" + r.id + "' has no pixels");
    std::filesystem::path p(*r.pixels_path);
    if (p.is_relative()) p = base_dir / p;
    Image img = png::to_image(png::read(p));
    if (img.height() != static_cast<std::size_t>(r.height) || img.width() != static_cast<std::size_t>(r.width))
        throw std::runtime_error("record '" + r.id + "': PNG size differs from manifest width/height");
    return img;
}

/// Per-class hold-out size: round-half-up of fraction * count.
inline std::size_t holdout_count(double fraction, std::size_t class_count) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(class_count) + 0.5));
}

/// Stratified train/hold-out partition. Within each class the records are
/// shuffled with the seeded generator and the first round(f * n) become
/// hold-out. Both outputs keep the input order and carry split tags.
inline std::pair<DatasetManifest, DatasetManifest> stratified_split(const DatasetManifest& m, const SplitSpec& spec) {
    if (!(spec.holdout_fraction > 0.0 && spec.holdout_fraction < 1.0))
        throw std::invalid_argument("stratified_split: holdout fraction must be in (0,1)");
    std::array<std::vector<std::size_t>, num_labels> by_class;
    for (std::size_t i = 0; i < m.records.size(); ++i) by_class[to_index(m.records[i].label)].push_back(i);

    std::vector<bool> is_holdout(m.records.size(), false);
    Rng rng(spec.seed);
    for (Label l : all_labels) {
        auto& idx = by_class[to_index(l)];
        if (idx.empty())
            throw std::invalid_argument("stratified_split: class " + std::string(to_string(l)) + " has no records");
        rng.shuffle(std::span<std::size_t>(idx));
        const std::size_t k = holdout_count(spec.holdout_fraction, idx.size());
        for (std::size_t j = 0; j < k; ++j) is_holdout[idx[j]] = true;
    }

    DatasetManifest train, holdout;
    train.base_dir = holdout.base_dir = m.base_dir;
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        ImageRecord r = m.records[i];
        r.split = is_holdout[i] ? SplitTag::Holdout : SplitTag::Train;
        (is_holdout[i] ? holdout : train).records.push_back(std::move(r));
    }
    return {std::move(train), std::move(holdout)};
}

struct SynthOptions {
    int per_class = 100;
    int width = 64;
    int height = 64;
    int min_faces = 1;
    int max_faces = 4;
    std::uint64_t seed = 0;
};

/// Synthetic stand-in for a labeled group-image set.
///
/// Scores are class-conditional: the class's own emotions (Happy for
/// Positive, Neutral for Neutral, Anger/Disgust/Fear/Sad for Negative) are
/// drawn from U(0.55, 1) and every other score from U(0, 0.45), so the label
/// is recoverable from the mean score vector. Faces are non-overlapping square
/// boxes placed uniformly. Pixels are uniform 8-bit noise drawn from a stream
/// independent of the label, so raw rasters carry no class signal.
inline DatasetManifest synth_generate(const SynthOptions& opt) {
    if (opt.per_class < 1) throw std::invalid_argument("synth_generate: per_class must be >= 1");
    if (opt.width < 8 || opt.height < 8) throw std::invalid_argument("synth_generate: image must be at least 8x8");
    if (opt.min_faces < 0 || opt.max_faces < opt.min_faces)
        throw std::invalid_argument("synth_generate: invalid faces range");

    const int short_side = std::min(opt.width, opt.height);
    const int box_min = std::max(4, short_side / 10);
    const int box_max = std::max(box_min, short_side / 5);
    // Non-overlapping boxes of the minimum size must fit in half the area.
    if (static_cast<long long>(opt.max_faces) * box_min * box_min * 2 >
        static_cast<long long>(opt.width) * opt.height)
        throw std::invalid_argument("synth_generate: max faces too large to place boxes inside the image");

    auto class_profile = [](Label l, Rng& rng) {
        Scores7 s;
        for (double& v : s.v) v = rng.uniform(0.0, 0.45);
        auto high = [&](Emotion e) { s[e] = rng.uniform(0.55, 1.0); };
        switch (l) {
            case Label::Positive: high(Emotion::Happy); break;
            case Label::Neutral: high(Emotion::Neutral); break;
            case Label::Negative:
                for (Emotion e : {Emotion::Anger, Emotion::Disgust, Emotion::Fear, Emotion::Sad}) high(e);
                break;
        }
        return s;
    };

    DatasetManifest m;
    Rng rng(opt.seed);
    for (int i = 0; i < opt.per_class; ++i) {
        for (Label label : all_labels) {
            ImageRecord r;
            r.id = "synth_" + std::to_string(i * static_cast<int>(num_labels) + to_index(label));
            r.width = opt.width;
            r.height = opt.height;
            r.label = label;
            const int n_faces = static_cast<int>(rng.between(opt.min_faces, opt.max_faces));
            std::vector<FaceObservation> placed;
            for (int f = 0; f < n_faces; ++f) {
                bool ok = false;
                for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
                    FaceObservation face;
                    face.w = face.h = static_cast<int>(rng.between(box_min, box_max));
                    face.x = static_cast<int>(rng.between(0, opt.width - face.w));
                    face.y = static_cast<int>(rng.between(0, opt.height - face.h));
                    ok = std::none_of(placed.begin(), placed.end(), [&](const FaceObservation& o) {
                        return face.x < o.x + o.w && o.x < face.x + face.w && face.y < o.y + o.h &&
                               o.y < face.y + face.h;
                    });
                    if (ok) {
                        face.scores = class_profile(label, rng);
                        placed.push_back(face);
                    }
                }
                if (!ok) throw std::invalid_argument("synth_generate: could not place faces without overlap");
            }
            r.faces = std::move(placed);

            const auto record_index = static_cast<std::uint64_t>(m.records.size());
            Rng noise(derive_seed(opt.seed, 0x9A1E15ULL, record_index));
            Image px(static_cast<std::size_t>(opt.height), static_cast<std::size_t>(opt.width));
            for (double& v : px.values()) v = static_cast<double>(noise.below(256));
            r.pixels = std::move(px);
            m.records.push_back(std::move(r));
        }
    }
    return m;
}

}  // namespace gaffect
