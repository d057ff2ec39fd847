#pragma once

// Shared generators for the test suites. Everything is seeded; no test
// depends on wall-clock or global state.

#include <vector>

#include "avisc/rng.hpp"
#include "avisc/types.hpp"

namespace avisc::testing {

// Valid snapshot with softmax-normalized rows.
inline AttentionSnapshot random_snapshot(Rng& rng, size_t layers, size_t heads, size_t keys,
                                         size_t image_tokens) {
    AttentionSnapshot snap(layers, heads, keys, image_tokens);
    snap.query_position = keys - 1;
    for (size_t l = 0; l < layers; ++l) {
        for (size_t h = 0; h < heads; ++h) {
            double sum = 0.0;
            for (size_t k = 0; k < keys; ++k) {
                const double w = 0.05 + rng.uniform();
                snap.at(l, h, k) = w;
                sum += w;
            }
            for (size_t k = 0; k < keys; ++k) snap.at(l, h, k) /= sum;
        }
    }
    return snap;
}

inline LogitVector random_logits(Rng& rng, size_t n, double scale = 4.0) {
    LogitVector logits;
    logits.values.resize(n);
    for (double& x : logits.values) x = scale * (rng.uniform() - 0.5);
    return logits;
}

inline std::vector<double> random_profile(Rng& rng, size_t n) {
    std::vector<double> profile(n);
    double sum = 0.0;
    for (double& p : profile) {
        p = rng.uniform();
        sum += p;
    }
    for (double& p : profile) p /= sum;
    return profile;
}

inline VisualTokenSet random_visual(Rng& rng, size_t count, size_t dim) {
    VisualTokenSet v(count, dim);
    for (double& x : v.data()) x = rng.normal();
    return v;
}

}  // namespace avisc::testing
