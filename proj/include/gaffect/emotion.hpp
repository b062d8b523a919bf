#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gaffect {

/// Group affect class. Index order follows the dataset tables: Positive, Neutral, Negative.
enum class Label : int { Positive = 0, Neutral = 1, Negative = 2 };

inline constexpr std::size_t num_labels = 3;
inline constexpr std::array<Label, num_labels> all_labels{Label::Positive, Label::Neutral, Label::Negative};

constexpr int to_index(Label l) noexcept { return static_cast<int>(l); }

inline Label label_from_index(int i) {
    if (i < 0 || i >= static_cast<int>(num_labels)) throw std::out_of_range("label index " + std::to_string(i));
    return static_cast<Label>(i);
}

constexpr std::string_view to_string(Label l) noexcept {
    switch (l) {
        case Label::Positive: return "Positive";
        case Label::Neutral: return "Neutral";
        case Label::Negative: return "Negative";
    }
    return "?";
}

inline std::optional<Label> parse_label(std::string_view s) noexcept {
    for (Label l : all_labels)
        if (to_string(l) == s) return l;
    return std::nullopt;
}

/// Index of each emotion inside a score vector.
enum class Emotion : std::size_t { Anger = 0, Disgust, Fear, Happy, Neutral, Sad, Surprise };

inline constexpr std::size_t num_emotions = 7;

/// Seven emotion scores in the fixed order Anger, Disgust, Fear, Happy, Neutral, Sad, Surprise.
/// Scores are independent model outputs in [0, 1]; they need not sum to one.
struct Scores7 {
    std::array<double, num_emotions> v{};

    double operator[](Emotion e) const noexcept { return v[static_cast<std::size_t>(e)]; }
    double& operator[](Emotion e) noexcept { return v[static_cast<std::size_t>(e)]; }

    bool valid() const noexcept {
        for (double s : v)
            if (!(s >= 0.0 && s <= 1.0)) return false;
        return true;
    }

    bool operator==(const Scores7&) const = default;
};

/// Per-face (negative, neutral, positive) intensities.
struct AffectTriple {
    double negative = 0.0;
    double neutral = 0.0;
    double positive = 0.0;

    bool operator==(const AffectTriple&) const = default;
};

/// Componentwise mean of the member models' score vectors.
inline Scores7 average_ensemble(std::span<const Scores7> members) {
    if (members.empty()) throw std::invalid_argument("average_ensemble: empty member list");
    Scores7 out;
    for (const auto& m : members)
        for (std::size_t i = 0; i < num_emotions; ++i) out.v[i] += m.v[i];
    for (double& s : out.v) s /= static_cast<double>(members.size());
    return out;
}

/// Heatmap affect mapping: Happy -> positive, Neutral -> neutral, the mean of
/// Anger, Disgust, Fear and Sad -> negative. Surprise is dropped.
inline AffectTriple to_affect_triple(const Scores7& s) {
    if (!s.valid()) throw std::invalid_argument("to_affect_triple: score outside [0,1]");
    return AffectTriple{
        .negative = (s[Emotion::Anger] + s[Emotion::Disgust] + s[Emotion::Fear] + s[Emotion::Sad]) / 4.0,
        .neutral = s[Emotion::Neutral],
        .positive = s[Emotion::Happy],
    };
}

/// Class of a single emotion for the averaging baseline. Unlike the heatmap
/// mapping, Surprise counts as Negative here.
constexpr Label emotion_category(Emotion e) noexcept {
    switch (e) {
        case Emotion::Happy: return Label::Positive;
        case Emotion::Neutral: return Label::Neutral;
        default: return Label::Negative;
    }
}

/// Category of the argmax emotion. Ties resolve to the first maximal index in
/// the fixed emotion order, so happy == neutral resolves to Positive.
inline Label baseline_categorize(const Scores7& s) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < num_emotions; ++i)
        if (s.v[i] > s.v[best]) best = i;
    return emotion_category(static_cast<Emotion>(best));
}

}  // namespace gaffect
