#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "avisc/backend.hpp"
#include "avisc/calibration.hpp"
#include "avisc/rng.hpp"
#include "avisc/types.hpp"

namespace avisc {

enum class DecodeMethod { Base, Avisc, Vcd };
enum class SampleStrategy { Greedy, Multinomial };
enum class DistortionKind { GaussianNoise, ZeroAll };

const char* to_string(DecodeMethod method);
DecodeMethod method_from_string(const std::string& name);
const char* to_string(SampleStrategy strategy);
SampleStrategy strategy_from_string(const std::string& name);

struct DistortionSpec {
    DistortionKind kind = DistortionKind::GaussianNoise;
    double strength = 1.0;  // stddev of the added noise
};

struct DecodeParams {
    DecodeMethod method = DecodeMethod::Base;
    SampleStrategy strategy = SampleStrategy::Greedy;
    double alpha = 2.5;  // contrast strength
    double beta = 0.1;   // plausibility cutoff
    size_t max_tokens = 64;
    uint64_t rng_seed = 0;
    // recompute blind tokens every step (default) or pin the step-0 result
    bool freeze_blind = false;
    CalibrationParams calibration;  // Avisc
    DistortionSpec distortion;      // Vcd

    void validate() const;
};

struct StepDiagnostics {
    size_t step = 0;
    uint64_t base_logits_digest = 0;
    bool contrast_applied = false;
    std::optional<CalibrationReport> calibration;
    size_t allowed_count = 0;
    TokenId chosen_token = 0;
};

struct DecodeResult {
    std::vector<TokenId> tokens;  // emitted sequence, end-of-sequence token excluded
    std::vector<StepDiagnostics> steps;
    bool hit_eos = false;
};

// Everything the decoder knew when it committed to a token. References are
// only valid during the callback.
struct StepObservation {
    size_t step;
    const LogitVector& base_logits;
    const LogitVector* biased_logits;  // null when no contrast stream ran
    const AttentionSnapshot& attention;
    const Distribution& final_distribution;  // plausibility-restricted
    TokenId chosen;
};
using DecodeObserver = std::function<void(const StepObservation&)>;

// (1 + alpha) * original - alpha * biased
LogitVector contrast_logits(const LogitVector& original, const LogitVector& biased, double alpha);

// Token ids whose probability reaches beta times the maximum. The argmax
// always qualifies, so the result is nonempty.
std::vector<TokenId> plausibility_mask(const Distribution& base_dist, double beta);

// Greedy: argmax over allowed, ties to the lowest id. Multinomial: draw
// from softmax restricted to allowed.
TokenId sample_token(const LogitVector& adjusted, const std::vector<TokenId>& allowed,
                     SampleStrategy strategy, Rng& rng);

VisualTokenSet distort_visual(const VisualTokenSet& v, const DistortionSpec& spec, uint64_t seed);

// Autoregressive loop over the backend. Per step: forward the main stream,
// derive the contrast logits per method, restrict to the plausibility set
// of the original distribution, sample. Both streams condition on the
// emitted prefix.
DecodeResult decode(Backend& backend, const VisualTokenSet& v, const QueryTokens& q,
                    const DecodeParams& params, std::string_view item_id = "",
                    const DecodeObserver& observer = {});

}  // namespace avisc
