#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "avisc/types.hpp"

namespace avisc {

enum class DeactivationScheme { Zeros, Ones, Noise, Mask };

const char* to_string(DeactivationScheme scheme);
DeactivationScheme scheme_from_string(const std::string& name);

struct CalibrationParams {
    double gamma = 0.5;   // cumulative image-attention threshold, (0, 1]
    double lambda = 1.0;  // stddev multiplier for the blind-token cut
    DeactivationScheme scheme = DeactivationScheme::Zeros;
    uint64_t noise_seed = 0;  // Noise scheme only

    void validate() const;
};

// Per-step record of what the calibration decided and why.
struct CalibrationReport {
    std::vector<double> layer_proportions;  // sums to 1
    std::vector<size_t> selected_layers;    // descending by proportion
    std::vector<double> image_profile;      // length N
    double mean = 0.0;
    double stddev = 0.0;  // population
    std::vector<size_t> blind_indices;
    bool fallback_used = false;         // blind set empty, contrast skipped this step
    bool degenerate_attention = false;  // zero image mass, uniform layer proportions substituted
};

// Share of total image-token attention mass per layer, over the snapshot's
// query row. Throws DegenerateAttentionError when the total mass is zero.
std::vector<double> layer_attention_proportions(const AttentionSnapshot& snap);

// Shortest prefix of layers, sorted by proportion descending (ties by lower
// index), whose cumulative proportion reaches gamma. Never empty.
std::vector<size_t> select_layers(const std::vector<double>& proportions, double gamma);

// Mean attention on each image token across (selected layers x heads).
std::vector<double> image_attention_profile(const AttentionSnapshot& snap,
                                            const std::vector<size_t>& selected);

struct BlindTokenResult {
    std::vector<size_t> indices;  // { j : profile[j] > mean + lambda * stddev }
    double mean = 0.0;
    double stddev = 0.0;
};

BlindTokenResult identify_blind_tokens(const std::vector<double>& profile, double lambda);

// Copies blind rows, deactivates the rest per scheme. The Noise scheme
// reseeds from (noise_seed, step_index, row) so repeat runs match.
VisualTokenSet build_biased_visual(const VisualTokenSet& v, const std::vector<size_t>& blind,
                                   const CalibrationParams& params, size_t step_index = 0);

// Full pipeline: layer proportions -> top-P selection -> image profile ->
// blind tokens -> biased visual set. An empty blind set flips fallback_used
// and returns the input set unchanged; zero image mass substitutes uniform
// layer proportions.
std::pair<VisualTokenSet, CalibrationReport> calibrate(const AttentionSnapshot& snap,
                                                       const VisualTokenSet& v,
                                                       const CalibrationParams& params,
                                                       size_t step_index = 0);

}  // namespace avisc
