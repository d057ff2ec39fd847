#pragma once

#include <memory>
#include <vector>

#include "avisc/backend.hpp"

namespace avisc {

// Desk-scale stand-in for a real LVLM stack. Weights are fixed by seed at
// construction and never trained.
struct ToyLVLMConfig {
    size_t vocab_size = 32;
    size_t embed_dim = 16;  // D, divisible by heads
    size_t layers = 4;      // L
    size_t heads = 2;       // H
    size_t image_tokens = 8;  // N
    size_t max_context = 160;
    uint64_t weight_seed = 0x5eed;

    void validate() const;
};

struct ToyWeights;  // internal

class ToyBackend : public Backend {
public:
    explicit ToyBackend(const ToyLVLMConfig& config);
    ~ToyBackend() override;

    const BackendCaps& caps() const override { return caps_; }
    std::unique_ptr<BackendSession> open_session(std::string_view item_id) override;
    std::string name() const override { return "toy"; }

    std::optional<TokenId> token_for_word(std::string_view word) const override;
    std::string word_for_token(TokenId token) const override;

    const ToyLVLMConfig& config() const { return config_; }

private:
    ToyLVLMConfig config_;
    BackendCaps caps_;
    std::shared_ptr<const ToyWeights> weights_;  // immutable, shared across sessions
    std::vector<std::string> wordlist_;
};

}  // namespace avisc
