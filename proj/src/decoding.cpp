#include "avisc/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace avisc {

const char* to_string(DecodeMethod method) {
    switch (method) {
        case DecodeMethod::Base: return "base";
        case DecodeMethod::Avisc: return "avisc";
        case DecodeMethod::Vcd: return "vcd";
    }
    return "?";
}

DecodeMethod method_from_string(const std::string& name) {
    if (name == "base") return DecodeMethod::Base;
    if (name == "avisc") return DecodeMethod::Avisc;
    if (name == "vcd") return DecodeMethod::Vcd;
    throw std::invalid_argument("unknown method '" + name + "' (expected base|avisc|vcd)");
}

const char* to_string(SampleStrategy strategy) {
    switch (strategy) {
        case SampleStrategy::Greedy: return "greedy";
        case SampleStrategy::Multinomial: return "multinomial";
    }
    return "?";
}

SampleStrategy strategy_from_string(const std::string& name) {
    if (name == "greedy") return SampleStrategy::Greedy;
    if (name == "multinomial") return SampleStrategy::Multinomial;
    throw std::invalid_argument("unknown strategy '" + name + "' (expected greedy|multinomial)");
}

void DecodeParams::validate() const {
    if (alpha < 0.0) throw std::invalid_argument("alpha must be >= 0");
    if (beta < 0.0 || beta >= 1.0) throw std::invalid_argument("beta must be in [0, 1)");
    if (max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
    calibration.validate();
}

LogitVector contrast_logits(const LogitVector& original, const LogitVector& biased,
                            double alpha) {
    if (original.size() != biased.size()) {
        throw std::invalid_argument("logit length mismatch: " + std::to_string(original.size()) +
                                    " vs " + std::to_string(biased.size()));
    }
    LogitVector out;
    out.values.resize(original.size());
    for (size_t i = 0; i < original.size(); ++i) {
        if (!std::isfinite(original.values[i]) || !std::isfinite(biased.values[i])) {
            throw std::invalid_argument("non-finite logit at index " + std::to_string(i));
        }
        // (1+a)*l - a*l' arranged so l'=l and a=0 reproduce l bit-exactly
        out.values[i] =
            original.values[i] + alpha * (original.values[i] - biased.values[i]);
    }
    return out;
}

std::vector<TokenId> plausibility_mask(const Distribution& base_dist, double beta) {
    double max_p = 0.0;
    for (double p : base_dist.probs) max_p = std::max(max_p, p);
    const double threshold = beta * max_p;
    std::vector<TokenId> allowed;
    for (size_t i = 0; i < base_dist.probs.size(); ++i) {
        if (base_dist.probs[i] >= threshold) allowed.push_back(static_cast<TokenId>(i));
    }
    return allowed;
}

TokenId sample_token(const LogitVector& adjusted, const std::vector<TokenId>& allowed,
                     SampleStrategy strategy, Rng& rng) {
    if (allowed.empty()) {
        throw std::runtime_error("plausibility set is empty");
    }
    if (strategy == SampleStrategy::Greedy) {
        TokenId best = allowed.front();
        double best_value = adjusted.values[static_cast<size_t>(best)];
        for (TokenId id : allowed) {
            const double value = adjusted.values[static_cast<size_t>(id)];
            if (value > best_value) {  // strict: ties keep the lowest id
                best_value = value;
                best = id;
            }
        }
        return best;
    }

    // softmax over the allowed subset only
    double max_logit = -std::numeric_limits<double>::infinity();
    for (TokenId id : allowed) {
        max_logit = std::max(max_logit, adjusted.values[static_cast<size_t>(id)]);
    }
    std::vector<double> weights(allowed.size());
    double sum = 0.0;
    for (size_t i = 0; i < allowed.size(); ++i) {
        weights[i] = std::exp(adjusted.values[static_cast<size_t>(allowed[i])] - max_logit);
        sum += weights[i];
    }
    const double u = rng.uniform() * sum;
    double cumulative = 0.0;
    for (size_t i = 0; i < allowed.size(); ++i) {
        cumulative += weights[i];
        if (u < cumulative) return allowed[i];
    }
    return allowed.back();
}

VisualTokenSet distort_visual(const VisualTokenSet& v, const DistortionSpec& spec,
                              uint64_t seed) {
    VisualTokenSet out = v;
    switch (spec.kind) {
        case DistortionKind::ZeroAll:
            std::fill(out.data().begin(), out.data().end(), 0.0);
            break;
        case DistortionKind::GaussianNoise: {
            Rng rng(seed);
            for (double& x : out.data()) x += spec.strength * rng.normal();
            break;
        }
    }
    return out;
}

namespace {

// Restricted final distribution: disallowed entries pinned to zero.
Distribution restricted_distribution(const LogitVector& adjusted,
                                     const std::vector<TokenId>& allowed) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (TokenId id : allowed) {
        max_logit = std::max(max_logit, adjusted.values[static_cast<size_t>(id)]);
    }
    Distribution dist;
    dist.probs.assign(adjusted.size(), 0.0);
    double sum = 0.0;
    for (TokenId id : allowed) {
        const double e = std::exp(adjusted.values[static_cast<size_t>(id)] - max_logit);
        dist.probs[static_cast<size_t>(id)] = e;
        sum += e;
    }
    for (TokenId id : allowed) dist.probs[static_cast<size_t>(id)] /= sum;
    return dist;
}

uint64_t logits_digest(const LogitVector& logits) {
    return fnv1a64(logits.values.data(), logits.values.size() * sizeof(double));
}

StepOutput checked_forward(const std::function<StepOutput()>& forward, size_t step,
                           const char* stream) {
    StepOutput out;
    try {
        out = forward();
    } catch (const std::exception& e) {
        throw std::runtime_error("backend failure on " + std::string(stream) + " stream at step " +
                                 std::to_string(step) + ": " + e.what());
    }
    const ValidationResult check = validate_snapshot(out.attention);
    if (!check.ok) {
        throw std::runtime_error("invalid attention snapshot on " + std::string(stream) +
                                 " stream at step " + std::to_string(step) + ": " + check.message);
    }
    return out;
}

}  // namespace

DecodeResult decode(Backend& backend, const VisualTokenSet& v, const QueryTokens& q,
                    const DecodeParams& params, std::string_view item_id,
                    const DecodeObserver& observer) {
    params.validate();
    const BackendCaps& caps = backend.caps();
    if (params.method != DecodeMethod::Base && !caps.supports_biased_stream) {
        throw std::invalid_argument("backend '" + backend.name() +
                                    "' does not support a biased stream");
    }
    if (params.method == DecodeMethod::Avisc &&
        params.calibration.scheme == DeactivationScheme::Mask && !caps.supports_mask_scheme) {
        throw std::invalid_argument("backend '" + backend.name() +
                                    "' does not support the mask deactivation scheme");
    }

    Rng rng(params.rng_seed);
    DecodeResult result;

    auto main = backend.open_session(item_id);
    StepOutput main_out = checked_forward([&] { return main->prime(v, q); }, 0, "main");

    // Persistent auxiliary stream: VCD always, Avisc only when the blind
    // set is frozen after step 0. Per-step recomputation rebuilds the
    // stream from scratch because the biased visual input changes.
    std::unique_ptr<BackendSession> aux;
    std::optional<LogitVector> aux_logits;
    bool frozen_contrast_off = false;  // freeze_blind saw an empty blind set at step 0

    if (params.method == DecodeMethod::Vcd && !main_out.recorded_biased.has_value()) {
        const VisualTokenSet distorted =
            distort_visual(v, params.distortion, derive_seed(params.rng_seed, "vcd-distortion"));
        aux = backend.open_session(item_id);
        aux_logits = checked_forward([&] { return aux->prime(distorted, q); }, 0, "aux").logits;
    }

    for (size_t t = 0; t < params.max_tokens; ++t) {
        const LogitVector& base_logits = main_out.logits;
        const Distribution base_dist = softmax(base_logits);
        const std::vector<TokenId> allowed = plausibility_mask(base_dist, params.beta);

        StepDiagnostics diag;
        diag.step = t;
        diag.base_logits_digest = logits_digest(base_logits);
        diag.allowed_count = allowed.size();

        LogitVector adjusted = base_logits;
        const LogitVector* biased_for_observer = nullptr;
        std::optional<LogitVector> biased_storage;

        if (params.method == DecodeMethod::Avisc && !frozen_contrast_off) {
            const bool need_calibration = !params.freeze_blind || t == 0;
            if (need_calibration) {
                auto [v_star, report] = calibrate(main_out.attention, v, params.calibration, t);
                if (report.fallback_used) {
                    if (params.freeze_blind) frozen_contrast_off = true;
                } else if (main_out.recorded_biased.has_value()) {
                    biased_storage = main_out.recorded_biased;
                } else if (params.freeze_blind) {
                    aux = backend.open_session(item_id);
                    aux_logits =
                        checked_forward([&] { return aux->prime(v_star, q); }, t, "aux").logits;
                    biased_storage = aux_logits;
                } else {
                    // rebuild the biased stream on this step's blind set,
                    // conditioned on the same emitted prefix
                    auto fresh = backend.open_session(item_id);
                    StepOutput aux_out =
                        checked_forward([&] { return fresh->prime(v_star, q); }, t, "aux");
                    for (TokenId prev : result.tokens) {
                        aux_out = checked_forward([&] { return fresh->step(prev); }, t, "aux");
                    }
                    biased_storage = std::move(aux_out.logits);
                }
                diag.calibration = std::move(report);
            } else {
                // frozen blind set: the persistent stream advanced with the
                // main stream's last token
                if (main_out.recorded_biased.has_value()) {
                    biased_storage = main_out.recorded_biased;
                } else {
                    biased_storage = aux_logits;
                }
            }
            if (biased_storage.has_value()) {
                adjusted = contrast_logits(base_logits, *biased_storage, params.alpha);
                diag.contrast_applied = true;
                biased_for_observer = &*biased_storage;
            }
        } else if (params.method == DecodeMethod::Vcd) {
            if (main_out.recorded_biased.has_value()) {
                biased_storage = main_out.recorded_biased;
            } else {
                biased_storage = aux_logits;
            }
            adjusted = contrast_logits(base_logits, *biased_storage, params.alpha);
            diag.contrast_applied = true;
            biased_for_observer = &*biased_storage;
        }

        const TokenId token = sample_token(adjusted, allowed, params.strategy, rng);
        diag.chosen_token = token;

        if (observer) {
            const Distribution final_dist = restricted_distribution(adjusted, allowed);
            observer(StepObservation{t, base_logits, biased_for_observer, main_out.attention,
                                     final_dist, token});
        }
        result.steps.push_back(std::move(diag));

        if (token == caps.eos_token) {
            result.hit_eos = true;
            break;
        }
        result.tokens.push_back(token);
        if (t + 1 == params.max_tokens || main_out.end_of_stream) break;

        main_out = checked_forward([&] { return main->step(token); }, t + 1, "main");
        if (aux) {
            aux_logits = checked_forward([&] { return aux->step(token); }, t + 1, "aux").logits;
        }
    }
    return result;
}

}  // namespace avisc
