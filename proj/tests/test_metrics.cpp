#include "doctest.h"

#include <algorithm>
#include <set>

#include "avisc/metrics.hpp"
#include "avisc/rng.hpp"

using namespace avisc;

namespace {

YesNo random_yes_no(Rng& rng) { return rng.uniform() < 0.5 ? YesNo::Yes : YesNo::No; }

ObjectSet random_objects(Rng& rng, const std::vector<std::string>& pool) {
    ObjectSet set;
    for (const auto& name : pool) {
        if (rng.uniform() < 0.4) set.insert(name);
    }
    return set;
}

}  // namespace

TEST_CASE("yes/no parsing picks the first standalone word") {
    CHECK(parse_yes_no("Yes, there is a cat.") == YesNo::Yes);
    CHECK(parse_yes_no("No. The image shows a beach.") == YesNo::No);
    CHECK(parse_yes_no("The image shows a beach.") == YesNo::Unparsed);
    CHECK(parse_yes_no("I would say no, not really") == YesNo::No);
    CHECK(parse_yes_no("noisy yesterday") == YesNo::Unparsed);  // word boundaries
    CHECK(parse_yes_no("YES!") == YesNo::Yes);
    CHECK(parse_yes_no("") == YesNo::Unparsed);
}

TEST_CASE("pope scores on the worked confusion matrix") {
    std::vector<BinaryOutcome> outcomes;
    // TP=2, FP=1, FN=1, TN=1
    outcomes.push_back({YesNo::Yes, YesNo::Yes});
    outcomes.push_back({YesNo::Yes, YesNo::Yes});
    outcomes.push_back({YesNo::Yes, YesNo::No});
    outcomes.push_back({YesNo::No, YesNo::Yes});
    outcomes.push_back({YesNo::No, YesNo::No});
    const PopeScores s = pope_scores(outcomes);
    CHECK(s.precision == doctest::Approx(2.0 / 3.0));
    CHECK(s.recall == doctest::Approx(2.0 / 3.0));
    CHECK(s.f1 == doctest::Approx(2.0 / 3.0));
    CHECK(s.accuracy == doctest::Approx(3.0 / 5.0));
    CHECK_FALSE(s.zero_division);
}

TEST_CASE("pope extremes") {
    std::vector<BinaryOutcome> all_correct{{YesNo::Yes, YesNo::Yes}, {YesNo::No, YesNo::No}};
    const PopeScores perfect = pope_scores(all_correct);
    CHECK(perfect.accuracy == doctest::Approx(1.0));
    CHECK(perfect.f1 == doctest::Approx(1.0));

    std::vector<BinaryOutcome> all_yes{{YesNo::Yes, YesNo::Yes}, {YesNo::Yes, YesNo::No}};
    const PopeScores trigger_happy = pope_scores(all_yes);
    CHECK(trigger_happy.recall == doctest::Approx(1.0));
    CHECK(trigger_happy.precision == doctest::Approx(0.5));

    // nothing predicted positive: precision undefined, pinned to 0
    std::vector<BinaryOutcome> all_no{{YesNo::No, YesNo::Yes}, {YesNo::No, YesNo::No}};
    const PopeScores silent = pope_scores(all_no);
    CHECK(silent.precision == 0.0);
    CHECK(silent.zero_division);

    CHECK_THROWS_AS(pope_scores({}), std::invalid_argument);
}

TEST_CASE("unparsed predictions count as incorrect") {
    std::vector<BinaryOutcome> outcomes{
        {YesNo::Unparsed, YesNo::Yes},
        {YesNo::Unparsed, YesNo::No},
        {YesNo::Yes, YesNo::Yes},
    };
    const PopeScores s = pope_scores(outcomes);
    CHECK(s.unparsed == 2);
    CHECK(s.accuracy == doctest::Approx(1.0 / 3.0));
    CHECK(s.false_negative == 1);  // unparsed on a yes label misses the positive
}

TEST_CASE("pope matches a brute-force confusion matrix on random lists") {
    Rng rng(8080);
    for (int trial = 0; trial < 1000; ++trial) {
        const size_t n = 1 + rng.next_u64() % 40;
        std::vector<BinaryOutcome> outcomes(n);
        for (auto& o : outcomes) {
            const double roll = rng.uniform();
            o.prediction = roll < 0.4 ? YesNo::Yes : (roll < 0.8 ? YesNo::No : YesNo::Unparsed);
            o.label = random_yes_no(rng);
        }
        // independent tally
        size_t tp = 0, fp = 0, tn = 0, fn = 0, correct = 0;
        for (const auto& o : outcomes) {
            if (o.label == YesNo::Yes && o.prediction == YesNo::Yes) ++tp;
            if (o.label == YesNo::Yes && o.prediction != YesNo::Yes) ++fn;
            if (o.label == YesNo::No && o.prediction == YesNo::Yes) ++fp;
            if (o.label == YesNo::No && o.prediction == YesNo::No) ++tn;
            if (o.label == o.prediction) ++correct;
        }
        const PopeScores s = pope_scores(outcomes);
        CHECK(s.true_positive == tp);
        CHECK(s.false_positive == fp);
        CHECK(s.true_negative == tn);
        CHECK(s.false_negative == fn);
        CHECK(s.accuracy == doctest::Approx(static_cast<double>(correct) / n));
        if (tp + fp > 0) {
            CHECK(s.precision == doctest::Approx(static_cast<double>(tp) / (tp + fp)));
        }
        if (tp + fn > 0) {
            CHECK(s.recall == doctest::Approx(static_cast<double>(tp) / (tp + fn)));
        }
        if (s.precision + s.recall > 0) {
            CHECK(s.f1 == doctest::Approx(2 * s.precision * s.recall /
                                          (s.precision + s.recall)));
        }
    }
}

TEST_CASE("mme worked examples") {
    auto item = [](const char* id, YesNo l1, YesNo p1, YesNo l2, YesNo p2) {
        MmeItem it;
        it.image_id = id;
        it.questions = {MmeQuestion{l1, p1}, MmeQuestion{l2, p2}};
        return it;
    };

    SUBCASE("all correct maxes the category at 200") {
        const MmeScores s = mme_scores({item("a", YesNo::Yes, YesNo::Yes, YesNo::No, YesNo::No)});
        CHECK(s.score == doctest::Approx(200.0));
    }
    SUBCASE("one full image and one half image give 125") {
        const MmeScores s = mme_scores({
            item("a", YesNo::Yes, YesNo::Yes, YesNo::No, YesNo::No),
            item("b", YesNo::Yes, YesNo::Yes, YesNo::No, YesNo::Yes),
        });
        CHECK(s.acc == doctest::Approx(0.75));
        CHECK(s.acc_plus == doctest::Approx(0.5));
        CHECK(s.score == doctest::Approx(125.0));
    }
    SUBCASE("all wrong scores zero") {
        const MmeScores s = mme_scores({item("a", YesNo::Yes, YesNo::No, YesNo::No, YesNo::Yes)});
        CHECK(s.score == doctest::Approx(0.0));
    }
    SUBCASE("an image needs exactly two questions") {
        MmeItem bad;
        bad.image_id = "x";
        bad.questions = {MmeQuestion{YesNo::Yes, YesNo::Yes}};
        CHECK_THROWS_AS(mme_scores({bad}), std::invalid_argument);
    }
}

TEST_CASE("mme acc-plus never exceeds acc") {
    Rng rng(9090);
    for (int trial = 0; trial < 500; ++trial) {
        const size_t n = 1 + rng.next_u64() % 20;
        std::vector<MmeItem> items(n);
        for (size_t i = 0; i < n; ++i) {
            items[i].image_id = "img" + std::to_string(i);
            items[i].questions = {MmeQuestion{random_yes_no(rng), random_yes_no(rng)},
                                  MmeQuestion{random_yes_no(rng), random_yes_no(rng)}};
        }
        const MmeScores s = mme_scores(items);
        CHECK(s.acc_plus <= s.acc + 1e-12);
        CHECK(s.score == doctest::Approx(100.0 * s.acc + 100.0 * s.acc_plus));
    }
}

TEST_CASE("generative metric worked examples") {
    const ObjectSet r{"cat", "dog"};
    const ObjectSet a{"cat"};
    CHECK(chair(r, a) == doctest::Approx(0.5));
    CHECK(cover(r, a) == doctest::Approx(1.0));
    CHECK(hal(chair(r, a)) == 1);

    const ObjectSet subset{"cat"};
    CHECK(chair(subset, ObjectSet{"cat", "tree"}) == doctest::Approx(0.0));
    CHECK(hal(0.0) == 0);

    CHECK(cog(ObjectSet{"car"}, ObjectSet{"car"}) == doctest::Approx(1.0));

    // degenerate sets
    CHECK(chair({}, a) == 0.0);
    CHECK(cover(r, {}) == 0.0);
    CHECK(cog({}, a) == 0.0);
}

TEST_CASE("generative metrics match direct set arithmetic on random triples") {
    Rng rng(7070);
    const std::vector<std::string> pool{"cat", "dog", "car", "tree", "bird",
                                        "sofa", "lamp", "cup", "hat"};
    for (int trial = 0; trial < 500; ++trial) {
        const ObjectSet r = random_objects(rng, pool);
        const ObjectSet a = random_objects(rng, pool);
        const ObjectSet h = random_objects(rng, pool);

        ObjectSet ra, rh;
        std::set_intersection(r.begin(), r.end(), a.begin(), a.end(),
                              std::inserter(ra, ra.begin()));
        std::set_intersection(r.begin(), r.end(), h.begin(), h.end(),
                              std::inserter(rh, rh.begin()));

        const double chair_value = chair(r, a);
        if (r.empty()) {
            CHECK(chair_value == 0.0);
        } else {
            CHECK(chair_value ==
                  doctest::Approx(1.0 - static_cast<double>(ra.size()) / r.size()));
        }
        if (a.empty()) {
            CHECK(cover(r, a) == 0.0);
        } else {
            CHECK(cover(r, a) == doctest::Approx(static_cast<double>(ra.size()) / a.size()));
        }
        CHECK(hal(chair_value) == (chair_value != 0.0 ? 1 : 0));
        if (!r.empty()) {
            CHECK(cog(r, h) == doctest::Approx(static_cast<double>(rh.size()) / r.size()));
        }

        CHECK(chair_value >= 0.0);
        CHECK(chair_value <= 1.0);
        CHECK(cover(r, a) >= 0.0);
        CHECK(cover(r, a) <= 1.0);
        CHECK(cog(r, h) <= 1.0);
    }
}

TEST_CASE("adding a hallucinated object never lowers chair") {
    Rng rng(6060);
    const std::vector<std::string> pool{"cat", "dog", "car", "tree", "bird"};
    for (int trial = 0; trial < 200; ++trial) {
        ObjectSet r = random_objects(rng, pool);
        const ObjectSet a = random_objects(rng, pool);
        const double before = chair(r, a);
        r.insert("made-up-object");  // never in a
        CHECK(chair(r, a) >= before - 1e-12);
    }
}

TEST_CASE("amber score identities") {
    CHECK(amber_score(6.70, 78.60) == doctest::Approx(85.95).epsilon(1e-9));
    CHECK(amber_score(6.25, 75.45) == doctest::Approx(84.60).epsilon(1e-9));
    CHECK(amber_score(0.0, 100.0) == doctest::Approx(100.0));
    CHECK_THROWS_AS(amber_score(-1.0, 50.0), std::invalid_argument);
    CHECK_THROWS_AS(amber_score(5.0, 101.0), std::invalid_argument);
}

TEST_CASE("object extraction follows word boundaries and synonyms") {
    ObjectLexicon lexicon;
    lexicon.add("cat", {"kitten"});
    lexicon.add("dog");

    CHECK(extract_objects("a cat sits near another cat", lexicon) == ObjectSet{"cat"});
    CHECK(extract_objects("a tiny kitten sleeps", lexicon) == ObjectSet{"cat"});
    CHECK(extract_objects("let us concatenate strings", lexicon) == ObjectSet{});
    CHECK(extract_objects("A DOG and a Cat", lexicon) == ObjectSet{"cat", "dog"});
    CHECK_THROWS_AS(extract_objects("anything", ObjectLexicon{}), std::invalid_argument);
}

TEST_CASE("extraction is invariant to response casing") {
    ObjectLexicon lexicon;
    lexicon.add("fire hydrant");
    lexicon.add("hydrant");
    lexicon.add("person", {"people"});

    const std::string text = "Two PEOPLE stand by the Fire Hydrant.";
    std::string upper = text, lower = text;
    std::transform(text.begin(), text.end(), upper.begin(), ::toupper);
    std::transform(text.begin(), text.end(), lower.begin(), ::tolower);
    const ObjectSet expected{"person", "fire hydrant"};
    CHECK(extract_objects(text, lexicon) == expected);
    CHECK(extract_objects(upper, lexicon) == expected);
    CHECK(extract_objects(lower, lexicon) == expected);
}

TEST_CASE("longest lexicon match wins") {
    ObjectLexicon lexicon;
    lexicon.add("hot dog");
    lexicon.add("dog");
    CHECK(extract_objects("a hot dog on a plate", lexicon) == ObjectSet{"hot dog"});
    CHECK(extract_objects("a dog and a hot dog", lexicon) == ObjectSet{"dog", "hot dog"});
}
