#include <algorithm>
#include <vector>

#include <gtest/gtest.h>

#include "gaffect/emotion.hpp"
#include "test_support.hpp"

using namespace gaffect;
using testing_support::random_scores;

namespace {

Scores7 filled(double x) {
    Scores7 s;
    s.v.fill(x);
    return s;
}

}  // namespace

TEST(Labels, RoundTripAndOrder) {
    EXPECT_EQ(to_index(Label::Positive), 0);
    EXPECT_EQ(to_index(Label::Neutral), 1);
    EXPECT_EQ(to_index(Label::Negative), 2);
    for (Label l : all_labels) EXPECT_EQ(parse_label(to_string(l)), l);
    EXPECT_FALSE(parse_label("positive"));
    EXPECT_THROW(label_from_index(3), std::out_of_range);
}

TEST(AverageEnsemble, SingleMemberIsIdentity) {
    Rng rng(1);
    const Scores7 s = random_scores(rng);
    const std::vector<Scores7> one{s};
    EXPECT_EQ(average_ensemble(one), s);
}

TEST(AverageEnsemble, ZerosAndOnesGiveHalf) {
    const std::vector<Scores7> m{filled(0.0), filled(1.0)};
    EXPECT_EQ(average_ensemble(m), filled(0.5));
}

TEST(AverageEnsemble, MatchesIndependentSummation) {
    Rng rng(2);
    std::vector<Scores7> m;
    for (int i = 0; i < 5; ++i) m.push_back(random_scores(rng));
    const Scores7 got = average_ensemble(m);
    for (std::size_t k = 0; k < num_emotions; ++k) {
        long double acc = 0;
        for (int i = 4; i >= 0; --i) acc += m[static_cast<std::size_t>(i)].v[k];
        EXPECT_NEAR(got.v[k], static_cast<double>(acc / 5), 1e-12);
    }
}

TEST(AverageEnsemble, EmptyThrows) {
    EXPECT_THROW(average_ensemble(std::vector<Scores7>{}), std::invalid_argument);
}

TEST(AverageEnsemble, PermutationInvariant) {
    Rng rng(3);
    std::vector<Scores7> m;
    for (int i = 0; i < 6; ++i) m.push_back(random_scores(rng));
    const Scores7 a = average_ensemble(m);
    std::reverse(m.begin(), m.end());
    std::swap(m[1], m[4]);
    const Scores7 b = average_ensemble(m);
    for (std::size_t k = 0; k < num_emotions; ++k) EXPECT_NEAR(a.v[k], b.v[k], 1e-15);
}

TEST(AffectTriple, AllZeros) { EXPECT_EQ(to_affect_triple(Scores7{}), (AffectTriple{0, 0, 0})); }

TEST(AffectTriple, AngerOnly) {
    Scores7 s;
    s[Emotion::Anger] = 1.0;
    const auto t = to_affect_triple(s);
    EXPECT_DOUBLE_EQ(t.negative, 0.25);
    EXPECT_DOUBLE_EQ(t.neutral, 0.0);
    EXPECT_DOUBLE_EQ(t.positive, 0.0);
}

TEST(AffectTriple, MixedIgnoresSurprise) {
    Scores7 s;
    s[Emotion::Anger] = s[Emotion::Disgust] = s[Emotion::Fear] = s[Emotion::Sad] = 0.1;
    s[Emotion::Neutral] = 0.3;
    s[Emotion::Happy] = 0.8;
    s[Emotion::Surprise] = 0.9;
    const auto t = to_affect_triple(s);
    EXPECT_NEAR(t.negative, 0.1, 1e-15);
    EXPECT_DOUBLE_EQ(t.neutral, 0.3);
    EXPECT_DOUBLE_EQ(t.positive, 0.8);
}

TEST(AffectTriple, SurpriseIndependence) {
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
        Scores7 s = random_scores(rng);
        const auto a = to_affect_triple(s);
        s[Emotion::Surprise] = rng.uniform();
        EXPECT_EQ(to_affect_triple(s), a);
    }
}

TEST(AffectTriple, NegativeMonotone) {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        Scores7 s = random_scores(rng);
        const double before = to_affect_triple(s).negative;
        const Emotion e = std::array{Emotion::Anger, Emotion::Disgust, Emotion::Fear, Emotion::Sad}[i % 4];
        s[e] = s[e] + (1.0 - s[e]) * rng.uniform();
        EXPECT_GE(to_affect_triple(s).negative, before);
    }
}

TEST(AffectTriple, RejectsOutOfRange) {
    Scores7 s;
    s[Emotion::Happy] = 1.5;
    EXPECT_THROW(to_affect_triple(s), std::invalid_argument);
}

TEST(BaselineCategorize, HappyMaximal) {
    Scores7 s = filled(0.1);
    s[Emotion::Happy] = 0.9;
    EXPECT_EQ(baseline_categorize(s), Label::Positive);
}

TEST(BaselineCategorize, SurpriseMaximalIsNegative) {
    Scores7 s = filled(0.1);
    s[Emotion::Surprise] = 0.9;
    EXPECT_EQ(baseline_categorize(s), Label::Negative);
}

TEST(BaselineCategorize, NeutralMaximal) {
    Scores7 s = filled(0.1);
    s[Emotion::Neutral] = 0.7;
    EXPECT_EQ(baseline_categorize(s), Label::Neutral);
}

TEST(BaselineCategorize, HappyNeutralTieGoesToHappy) {
    Scores7 s = filled(0.2);
    s[Emotion::Happy] = s[Emotion::Neutral] = 0.6;
    EXPECT_EQ(baseline_categorize(s), Label::Positive);
}

TEST(BaselineCategorize, NeutralSadTieGoesToNeutral) {
    Scores7 s = filled(0.2);
    s[Emotion::Neutral] = s[Emotion::Sad] = 0.6;
    EXPECT_EQ(baseline_categorize(s), Label::Neutral);
}

TEST(BaselineCategorize, InvariantUnderUniformShift) {
    Rng rng(6);
    for (int i = 0; i < 200; ++i) {
        Scores7 s;
        for (double& v : s.v) v = rng.uniform(0.0, 0.8);
        Scores7 shifted = s;
        const double eps = rng.uniform(0.0, 0.2);
        for (double& v : shifted.v) v += eps;
        EXPECT_EQ(baseline_categorize(shifted), baseline_categorize(s));
    }
}

TEST(EmotionCategory, Mapping) {
    EXPECT_EQ(emotion_category(Emotion::Happy), Label::Positive);
    EXPECT_EQ(emotion_category(Emotion::Neutral), Label::Neutral);
    for (Emotion e : {Emotion::Anger, Emotion::Disgust, Emotion::Fear, Emotion::Sad, Emotion::Surprise})
        EXPECT_EQ(emotion_category(e), Label::Negative);
}
