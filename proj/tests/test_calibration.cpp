#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "avisc/calibration.hpp"
#include "helpers.hpp"

using namespace avisc;

namespace {

// Snapshot with explicit per-(layer, head) image rows; the remainder of
// each row's mass is parked on the non-image keys.
AttentionSnapshot snapshot_with_image_rows(
    const std::vector<std::vector<std::vector<double>>>& rows_per_layer_head, size_t keys) {
    const size_t layers = rows_per_layer_head.size();
    const size_t heads = rows_per_layer_head.front().size();
    const size_t image_tokens = rows_per_layer_head.front().front().size();
    REQUIRE(keys > image_tokens);
    AttentionSnapshot snap(layers, heads, keys, image_tokens);
    snap.query_position = keys - 1;
    for (size_t l = 0; l < layers; ++l) {
        for (size_t h = 0; h < heads; ++h) {
            double image_mass = 0.0;
            for (size_t j = 0; j < image_tokens; ++j) {
                snap.at(l, h, j) = rows_per_layer_head[l][h][j];
                image_mass += rows_per_layer_head[l][h][j];
            }
            const double rest = (1.0 - image_mass) / static_cast<double>(keys - image_tokens);
            for (size_t k = image_tokens; k < keys; ++k) snap.at(l, h, k) = rest;
        }
    }
    return snap;
}

// Straight-line enumeration of the full pipeline, written independently of
// the library path: raw loops, its own sort and threshold.
std::vector<size_t> brute_force_blind(const AttentionSnapshot& snap, double gamma,
                                      double lambda) {
    const size_t L = snap.layers, H = snap.heads, N = snap.image_token_count;
    std::vector<double> mass(L, 0.0);
    for (size_t l = 0; l < L; ++l)
        for (size_t h = 0; h < H; ++h)
            for (size_t k = 0; k < N; ++k) mass[l] += snap.at(l, h, k);
    // same per-layer grouping as the library so exact fp ties break alike
    double total = 0.0;
    for (size_t l = 0; l < L; ++l) total += mass[l];
    std::vector<std::pair<double, size_t>> ranked;
    for (size_t l = 0; l < L; ++l) ranked.emplace_back(mass[l] / total, l);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<size_t> picked;
    double cum = 0.0;
    for (const auto& [p, l] : ranked) {
        picked.push_back(l);
        cum += p;
        if (cum >= gamma - 1e-9) break;
    }
    std::vector<double> profile(N, 0.0);
    for (size_t l : picked)
        for (size_t h = 0; h < H; ++h)
            for (size_t j = 0; j < N; ++j) profile[j] += snap.at(l, h, j);
    for (double& p : profile) p /= static_cast<double>(picked.size() * H);
    double mu = 0.0;
    for (double p : profile) mu += p;
    mu /= static_cast<double>(N);
    double var = 0.0;
    for (double p : profile) var += (p - mu) * (p - mu);
    const double sigma = std::sqrt(var / static_cast<double>(N));
    std::vector<size_t> blind;
    for (size_t j = 0; j < N; ++j) {
        if (profile[j] > mu + lambda * sigma) blind.push_back(j);
    }
    return blind;
}

}  // namespace

TEST_CASE("layer proportions from explicit image mass") {
    // image mass 0.3 vs 0.1 over one head -> [0.75, 0.25]
    const auto snap = snapshot_with_image_rows(
        {{{0.2, 0.1}}, {{0.06, 0.04}}}, 4);
    const auto props = layer_attention_proportions(snap);
    CHECK(props[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(props[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(props[0] + props[1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("identical layers give uniform proportions, single layer gives [1]") {
    const std::vector<std::vector<double>> head_rows{{0.15, 0.25}};
    const auto uniform = layer_attention_proportions(
        snapshot_with_image_rows({head_rows, head_rows, head_rows, head_rows}, 5));
    for (double p : uniform) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));

    const auto single = layer_attention_proportions(snapshot_with_image_rows({head_rows}, 5));
    REQUIRE(single.size() == 1);
    CHECK(single[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero image attention mass raises the degenerate error") {
    AttentionSnapshot snap(2, 1, 4, 2);
    snap.query_position = 3;
    for (size_t l = 0; l < 2; ++l) {
        snap.at(l, 0, 2) = 0.5;
        snap.at(l, 0, 3) = 0.5;
    }
    CHECK_THROWS_AS(layer_attention_proportions(snap), DegenerateAttentionError);
}

TEST_CASE("select_layers worked examples") {
    CHECK(select_layers({0.7, 0.3}, 0.5) == std::vector<size_t>{0});
    CHECK(select_layers({0.4, 0.35, 0.25}, 0.5) == std::vector<size_t>{0, 1});
    CHECK(select_layers({0.1, 0.2, 0.3, 0.4}, 1.0) == std::vector<size_t>{3, 2, 1, 0});
}

TEST_CASE("select_layers breaks ties toward lower indices") {
    CHECK(select_layers({0.25, 0.25, 0.25, 0.25}, 0.5) == std::vector<size_t>{0, 1});
    CHECK(select_layers({0.2, 0.3, 0.3, 0.2}, 0.6) == std::vector<size_t>{1, 2});
}

TEST_CASE("image profile averages selected layers and heads") {
    // two heads with rows [0.2, 0.8] and [0.4, 0.6] -> [0.3, 0.7]
    AttentionSnapshot snap(1, 2, 2, 2);
    snap.query_position = 1;
    snap.at(0, 0, 0) = 0.2;
    snap.at(0, 0, 1) = 0.8;
    snap.at(0, 1, 0) = 0.4;
    snap.at(0, 1, 1) = 0.6;
    const auto profile = image_attention_profile(snap, {0});
    CHECK(profile[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(profile[1] == doctest::Approx(0.7).epsilon(1e-12));

    CHECK_THROWS_AS(image_attention_profile(snap, {}), std::invalid_argument);
    CHECK_THROWS_AS(image_attention_profile(snap, {3}), std::invalid_argument);
}

TEST_CASE("image profile over identical layers equals the single-layer case") {
    const std::vector<std::vector<double>> head_rows{{0.3, 0.1}, {0.2, 0.2}};
    const auto one = snapshot_with_image_rows({head_rows}, 4);
    const auto three = snapshot_with_image_rows({head_rows, head_rows, head_rows}, 4);
    const auto profile_one = image_attention_profile(one, {0});
    const auto profile_three = image_attention_profile(three, {0, 1, 2});
    for (size_t j = 0; j < profile_one.size(); ++j) {
        CHECK(profile_one[j] == doctest::Approx(profile_three[j]).epsilon(1e-12));
    }
}

TEST_CASE("blind token identification worked example") {
    const auto result = identify_blind_tokens({0.1, 0.1, 0.1, 0.7}, 1.0);
    CHECK(result.mean == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(result.stddev == doctest::Approx(0.2598076211).epsilon(1e-9));
    CHECK(result.indices == std::vector<size_t>{3});
}

TEST_CASE("uniform profile yields no blind tokens at any lambda") {
    for (double lambda : {0.0, 0.5, 1.0, 2.0}) {
        const auto result = identify_blind_tokens({0.25, 0.25, 0.25, 0.25}, lambda);
        CHECK(result.indices.empty());
        CHECK(result.stddev == doctest::Approx(0.0));
    }
}

TEST_CASE("lambda zero keeps everything above the mean") {
    const std::vector<double> profile{0.05, 0.3, 0.15, 0.5};
    const auto result = identify_blind_tokens(profile, 0.0);
    std::vector<size_t> expected;
    const double mu = std::accumulate(profile.begin(), profile.end(), 0.0) / 4.0;
    for (size_t j = 0; j < profile.size(); ++j) {
        if (profile[j] > mu) expected.push_back(j);
    }
    CHECK(result.indices == expected);
}

TEST_CASE("biased visual worked examples") {
    const VisualTokenSet v = VisualTokenSet::from_rows(
        {{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}});
    CalibrationParams params;

    SUBCASE("all blind leaves the input unchanged") {
        const auto out = build_biased_visual(v, {0, 1, 2}, params);
        CHECK(out.data() == v.data());
        CHECK_FALSE(out.any_excluded());
    }
    SUBCASE("zeros wipes the non-blind rows") {
        const auto out = build_biased_visual(v, {1}, params);
        CHECK(out.row(0)[0] == 0.0);
        CHECK(out.row(0)[1] == 0.0);
        CHECK(out.row(1)[0] == 3.0);
        CHECK(out.row(2)[0] == 0.0);
    }
    SUBCASE("empty blind set zeroes everything") {
        const auto out = build_biased_visual(v, {}, params);
        for (double x : out.data()) CHECK(x == 0.0);
    }
    SUBCASE("ones writes unit rows") {
        params.scheme = DeactivationScheme::Ones;
        const auto out = build_biased_visual(v, {2}, params);
        CHECK(out.row(0)[0] == 1.0);
        CHECK(out.row(1)[1] == 1.0);
        CHECK(out.row(2)[0] == 5.0);
    }
    SUBCASE("noise is reproducible and varies per step and row") {
        params.scheme = DeactivationScheme::Noise;
        params.noise_seed = 99;
        const auto a = build_biased_visual(v, {2}, params, 4);
        const auto b = build_biased_visual(v, {2}, params, 4);
        CHECK(a.data() == b.data());
        const auto other_step = build_biased_visual(v, {2}, params, 5);
        CHECK(a.data() != other_step.data());
        CHECK(std::vector<double>(a.row(0).begin(), a.row(0).end()) !=
              std::vector<double>(a.row(1).begin(), a.row(1).end()));
    }
    SUBCASE("mask keeps rows but flags them excluded") {
        params.scheme = DeactivationScheme::Mask;
        const auto out = build_biased_visual(v, {1}, params);
        CHECK(out.data() == v.data());
        CHECK(out.excluded(0));
        CHECK_FALSE(out.excluded(1));
        CHECK(out.excluded(2));
    }
    SUBCASE("out-of-range blind index is rejected") {
        CHECK_THROWS_AS(build_biased_visual(v, {3}, params), std::invalid_argument);
    }
}

TEST_CASE("calibrate falls back on uniform attention") {
    Rng rng(42);
    AttentionSnapshot snap(2, 2, 6, 4);
    snap.query_position = 5;
    for (size_t l = 0; l < 2; ++l)
        for (size_t h = 0; h < 2; ++h)
            for (size_t k = 0; k < 6; ++k) snap.at(l, h, k) = 1.0 / 6.0;
    const VisualTokenSet v = testing::random_visual(rng, 4, 3);
    CalibrationParams params;
    const auto [v_star, report] = calibrate(snap, v, params);
    CHECK(report.fallback_used);
    CHECK(report.blind_indices.empty());
    CHECK(v_star.data() == v.data());  // untouched when no contrast will run
}

TEST_CASE("calibrate composes to a single surviving row") {
    // single layer, one head, image profile [0.1 0.1 0.1 0.7]
    const auto snap = snapshot_with_image_rows({{{0.1, 0.1, 0.1, 0.7}}}, 6);
    VisualTokenSet v(4, 3);
    for (double& x : v.data()) x = 1.0;
    CalibrationParams params;  // zeros scheme
    const auto [v_star, report] = calibrate(snap, v, params);
    CHECK_FALSE(report.fallback_used);
    CHECK(report.blind_indices == std::vector<size_t>{3});
    size_t nonzero_rows = 0;
    for (size_t j = 0; j < v_star.count(); ++j) {
        double norm = 0.0;
        for (double x : v_star.row(j)) norm += std::abs(x);
        if (norm > 0.0) ++nonzero_rows;
    }
    CHECK(nonzero_rows == 1);
}

TEST_CASE("gamma one with lambda zero never falls back on a non-uniform profile") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const auto snap = testing::random_snapshot(rng, 4, 2, 10, 6);
        const VisualTokenSet v = testing::random_visual(rng, 6, 4);
        CalibrationParams params;
        params.gamma = 1.0;
        params.lambda = 0.0;
        const auto [v_star, report] = calibrate(snap, v, params);
        CHECK_FALSE(report.fallback_used);
        CHECK_FALSE(report.blind_indices.empty());
    }
}

TEST_CASE("calibrate substitutes uniform proportions on zero image mass") {
    AttentionSnapshot snap(3, 1, 4, 2);
    snap.query_position = 3;
    for (size_t l = 0; l < 3; ++l) {
        snap.at(l, 0, 2) = 0.4;
        snap.at(l, 0, 3) = 0.6;
    }
    VisualTokenSet v(2, 2);
    CalibrationParams params;
    const auto [v_star, report] = calibrate(snap, v, params);
    CHECK(report.degenerate_attention);
    for (double p : report.layer_proportions) {
        CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
}

TEST_CASE("lambda monotonicity: larger lambda never adds blind tokens") {
    Rng rng(1234);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto profile = testing::random_profile(rng, 2 + trial % 12);
        const auto loose = identify_blind_tokens(profile, 0.0).indices;
        const auto mid = identify_blind_tokens(profile, 1.0).indices;
        const auto tight = identify_blind_tokens(profile, 1.5).indices;
        CHECK(std::includes(loose.begin(), loose.end(), mid.begin(), mid.end()));
        CHECK(std::includes(mid.begin(), mid.end(), tight.begin(), tight.end()));
    }
}

TEST_CASE("top-P selection is minimal and covering") {
    Rng rng(555);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto proportions = testing::random_profile(rng, 1 + trial % 10);
        for (double gamma : {0.25, 0.5, 0.75, 1.0}) {
            const auto selected = select_layers(proportions, gamma);
            REQUIRE_FALSE(selected.empty());
            double covered = 0.0;
            for (size_t l : selected) covered += proportions[l];
            CHECK(covered >= gamma - 1e-9);
            if (selected.size() > 1) {
                CHECK(covered - proportions[selected.back()] < gamma);
            }
        }
    }
}

TEST_CASE("selection and blind set are invariant to a positive rescale") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const auto snap = testing::random_snapshot(rng, 3, 2, 8, 5);
        AttentionSnapshot scaled = snap;
        const double c = 0.2 + 5.0 * rng.uniform();
        for (double& w : scaled.weights) w *= c;

        const auto props_a = layer_attention_proportions(snap);
        const auto props_b = layer_attention_proportions(scaled);
        for (size_t l = 0; l < props_a.size(); ++l) {
            CHECK(std::abs(props_a[l] - props_b[l]) < 1e-12);
        }
        CHECK(select_layers(props_a, 0.5) == select_layers(props_b, 0.5));

        const auto sel = select_layers(props_a, 0.5);
        const auto blind_a = identify_blind_tokens(image_attention_profile(snap, sel), 1.0);
        const auto blind_b = identify_blind_tokens(image_attention_profile(scaled, sel), 1.0);
        CHECK(blind_a.indices == blind_b.indices);
    }
}

TEST_CASE("pipeline matches the brute-force enumeration on random snapshots") {
    Rng rng(31337);
    for (int trial = 0; trial < 1000; ++trial) {
        const size_t layers = 1 + rng.next_u64() % 8;
        const size_t heads = 1 + rng.next_u64() % 8;
        const size_t image = 1 + rng.next_u64() % 8;
        const size_t keys = image + rng.next_u64() % 5;
        const auto snap = testing::random_snapshot(rng, layers, heads, keys, image);

        const double gamma = 0.25 + 0.75 * rng.uniform();
        const double lambda = 1.5 * rng.uniform();

        const auto props = layer_attention_proportions(snap);
        const auto selected = select_layers(props, gamma);
        const auto profile = image_attention_profile(snap, selected);
        const auto blind = identify_blind_tokens(profile, lambda);

        CHECK(blind.indices == brute_force_blind(snap, gamma, lambda));
    }
}

TEST_CASE("zeros scheme leaves exactly the blind rows nonzero") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const size_t n = 2 + rng.next_u64() % 7;
        VisualTokenSet v(n, 4);
        for (double& x : v.data()) x = 0.5 + rng.uniform();  // all rows nonzero
        std::set<size_t> blind_set;
        const size_t count = rng.next_u64() % (n + 1);
        while (blind_set.size() < count) blind_set.insert(rng.next_u64() % n);
        const std::vector<size_t> blind(blind_set.begin(), blind_set.end());

        const auto out = build_biased_visual(v, blind, CalibrationParams{});
        size_t nonzero = 0;
        for (size_t j = 0; j < n; ++j) {
            double norm = 0.0;
            for (double x : out.row(j)) norm += std::abs(x);
            if (norm > 0.0) ++nonzero;
        }
        CHECK(nonzero == blind.size());
    }
}

TEST_CASE("calibration parameter validation") {
    CalibrationParams params;
    params.gamma = 0.0;
    CHECK_THROWS_AS(params.validate(), std::invalid_argument);
    params.gamma = 1.5;
    CHECK_THROWS_AS(params.validate(), std::invalid_argument);
    params.gamma = 0.5;
    params.lambda = -0.1;
    CHECK_THROWS_AS(params.validate(), std::invalid_argument);
}
