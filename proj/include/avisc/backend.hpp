#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "avisc/types.hpp"

namespace avisc {

struct BackendCaps {
    bool supports_biased_stream = false;
    bool supports_mask_scheme = false;
    // false forces the harness to run items one at a time
    bool concurrent_sessions = true;
    TokenId eos_token = 0;
    size_t vocab_size = 0;
    size_t image_tokens = 0;  // N
    size_t embed_dim = 0;     // D
    size_t layers = 0;        // L
    size_t heads = 0;         // H
    size_t max_context = 0;
};

struct StepOutput {
    LogitVector logits;
    AttentionSnapshot attention;
    // Replay backends carry the recorded biased-stream logits here; live
    // backends leave it empty and the decoder forwards the biased input
    // itself.
    std::optional<LogitVector> recorded_biased;
    // set by replay backends on their final recorded step; generation
    // stops there even if max_tokens allows more
    bool end_of_stream = false;
};

// One autoregressive stream. prime() consumes the full (visual, query)
// prompt and returns the prediction state for the first response token;
// step() appends one token. Sessions are single-owner and sequential.
class BackendSession {
public:
    virtual ~BackendSession() = default;
    virtual StepOutput prime(const VisualTokenSet& v, const QueryTokens& q) = 0;
    virtual StepOutput step(TokenId token) = 0;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual const BackendCaps& caps() const = 0;
    // item_id routes trace backends to the per-item recording; live
    // backends ignore it
    virtual std::unique_ptr<BackendSession> open_session(std::string_view item_id) = 0;
    virtual std::string name() const = 0;

    // Text helpers for dataset handling. Backends without a vocabulary
    // mapping return nullopt / empty.
    virtual std::optional<TokenId> token_for_word(std::string_view) const { return std::nullopt; }
    virtual std::string word_for_token(TokenId) const { return {}; }
};

}  // namespace avisc
