#include "avisc/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "avisc/rng.hpp"

namespace avisc {

const char* to_string(DeactivationScheme scheme) {
    switch (scheme) {
        case DeactivationScheme::Zeros: return "zeros";
        case DeactivationScheme::Ones: return "ones";
        case DeactivationScheme::Noise: return "noise";
        case DeactivationScheme::Mask: return "mask";
    }
    return "?";
}

DeactivationScheme scheme_from_string(const std::string& name) {
    if (name == "zeros") return DeactivationScheme::Zeros;
    if (name == "ones") return DeactivationScheme::Ones;
    if (name == "noise") return DeactivationScheme::Noise;
    if (name == "mask") return DeactivationScheme::Mask;
    throw std::invalid_argument("unknown deactivation scheme '" + name +
                                "' (expected zeros|ones|noise|mask)");
}

void CalibrationParams::validate() const {
    if (!(gamma > 0.0) || gamma > 1.0) {
        throw std::invalid_argument("gamma must be in (0, 1], got " + std::to_string(gamma));
    }
    if (lambda < 0.0) {
        throw std::invalid_argument("lambda must be >= 0, got " + std::to_string(lambda));
    }
}

std::vector<double> layer_attention_proportions(const AttentionSnapshot& snap) {
    if (snap.image_token_count == 0) {
        throw std::invalid_argument("snapshot has an empty image span");
    }
    std::vector<double> mass(snap.layers, 0.0);
    double total = 0.0;
    for (size_t l = 0; l < snap.layers; ++l) {
        for (size_t h = 0; h < snap.heads; ++h) {
            for (size_t k = 0; k < snap.image_token_count; ++k) {
                mass[l] += snap.at(l, h, k);
            }
        }
        total += mass[l];
    }
    if (total <= 0.0) {
        throw DegenerateAttentionError("total image attention mass is zero");
    }
    for (double& m : mass) m /= total;
    return mass;
}

std::vector<size_t> select_layers(const std::vector<double>& proportions, double gamma) {
    if (proportions.empty()) {
        throw std::invalid_argument("cannot select layers from an empty proportion vector");
    }
    if (!(gamma > 0.0) || gamma > 1.0) {
        throw std::invalid_argument("gamma must be in (0, 1]");
    }
    std::vector<size_t> order(proportions.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (proportions[a] != proportions[b]) return proportions[a] > proportions[b];
        return a < b;  // ties to the lower layer index
    });

    std::vector<size_t> selected;
    double cumulative = 0.0;
    for (size_t idx : order) {
        selected.push_back(idx);
        cumulative += proportions[idx];
        // tolerance so gamma=1 does not depend on the last float crumb
        if (cumulative >= gamma - 1e-9) break;
    }
    return selected;
}

std::vector<double> image_attention_profile(const AttentionSnapshot& snap,
                                            const std::vector<size_t>& selected) {
    if (selected.empty()) {
        throw std::invalid_argument("layer selection is empty");
    }
    for (size_t l : selected) {
        if (l >= snap.layers) {
            throw std::invalid_argument("selected layer " + std::to_string(l) + " out of range");
        }
    }
    std::vector<double> profile(snap.image_token_count, 0.0);
    for (size_t l : selected) {
        for (size_t h = 0; h < snap.heads; ++h) {
            for (size_t j = 0; j < snap.image_token_count; ++j) {
                profile[j] += snap.at(l, h, j);
            }
        }
    }
    const double denom = static_cast<double>(selected.size() * snap.heads);
    for (double& p : profile) p /= denom;
    return profile;
}

BlindTokenResult identify_blind_tokens(const std::vector<double>& profile, double lambda) {
    if (profile.empty()) {
        throw std::invalid_argument("image attention profile is empty");
    }
    if (lambda < 0.0) {
        throw std::invalid_argument("lambda must be >= 0");
    }
    BlindTokenResult result;
    const double n = static_cast<double>(profile.size());
    result.mean = std::accumulate(profile.begin(), profile.end(), 0.0) / n;
    double var = 0.0;
    for (double p : profile) {
        const double d = p - result.mean;
        var += d * d;
    }
    result.stddev = std::sqrt(var / n);  // population stddev: full token set, not a sample

    const double threshold = result.mean + lambda * result.stddev;
    for (size_t j = 0; j < profile.size(); ++j) {
        if (profile[j] > threshold) result.indices.push_back(j);
    }
    return result;
}

VisualTokenSet build_biased_visual(const VisualTokenSet& v, const std::vector<size_t>& blind,
                                   const CalibrationParams& params, size_t step_index) {
    for (size_t j : blind) {
        if (j >= v.count()) {
            throw std::invalid_argument("blind index " + std::to_string(j) +
                                        " out of range for N=" + std::to_string(v.count()));
        }
    }
    std::vector<uint8_t> is_blind(v.count(), 0);
    for (size_t j : blind) is_blind[j] = 1;

    VisualTokenSet out = v;
    for (size_t j = 0; j < v.count(); ++j) {
        if (is_blind[j]) continue;
        auto row = out.row(j);
        switch (params.scheme) {
            case DeactivationScheme::Zeros:
                std::fill(row.begin(), row.end(), 0.0);
                break;
            case DeactivationScheme::Ones:
                std::fill(row.begin(), row.end(), 1.0);
                break;
            case DeactivationScheme::Noise: {
                Rng rng(derive_seed(params.noise_seed, step_index, j));
                for (double& x : row) x = rng.normal();
                break;
            }
            case DeactivationScheme::Mask:
                out.set_excluded(j, true);
                break;
        }
    }
    return out;
}

std::pair<VisualTokenSet, CalibrationReport> calibrate(const AttentionSnapshot& snap,
                                                       const VisualTokenSet& v,
                                                       const CalibrationParams& params,
                                                       size_t step_index) {
    params.validate();
    CalibrationReport report;
    try {
        report.layer_proportions = layer_attention_proportions(snap);
    } catch (const DegenerateAttentionError&) {
        report.degenerate_attention = true;
        report.layer_proportions.assign(snap.layers, 1.0 / static_cast<double>(snap.layers));
    }
    report.selected_layers = select_layers(report.layer_proportions, params.gamma);
    report.image_profile = image_attention_profile(snap, report.selected_layers);

    auto blind = identify_blind_tokens(report.image_profile, params.lambda);
    report.mean = blind.mean;
    report.stddev = blind.stddev;
    report.blind_indices = std::move(blind.indices);

    if (report.blind_indices.empty()) {
        // Nothing over-emphasized to contrast against; the decoder treats
        // this step as alpha=0.
        report.fallback_used = true;
        return {v, report};
    }
    return {build_biased_visual(v, report.blind_indices, params, step_index), report};
}

}  // namespace avisc
