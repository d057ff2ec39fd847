#include "avisc/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "avisc/rng.hpp"

namespace avisc {

namespace {

// Default vocabulary. Token 0 is the end-of-sequence marker; "yes"/"no"
// sit at fixed ids so generated text can feed the binary benchmarks.
const char* kDefaultWords[] = {
    "<eos>", "yes",   "no",    "is",    "there", "a",     "the",  "in",
    "image", "cat",   "dog",   "car",   "tree",  "person", "red",  "blue",
    "green", "small", "large", "on",    "under", "near",  "table", "chair",
    "bird",  "fish",  "sky",   "road",  "house", "ball",  "and",  "what",
};
constexpr size_t kDefaultWordCount = sizeof(kDefaultWords) / sizeof(kDefaultWords[0]);

constexpr double kInitRange = 0.08;

// Sharpening factor on the tied output projection. Raw activations of the
// untrained stack are near-uniform over the vocabulary; scaling gives the
// peaked next-token distributions the plausibility cutoff needs to bite.
constexpr double kLogitScale = 64.0;

double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)));
}

// y[out] += x[in] * w[in*cols + out]
void matvec(const std::vector<double>& w, const double* x, size_t rows, size_t cols,
            double* y) {
    std::fill(y, y + cols, 0.0);
    for (size_t i = 0; i < rows; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* wrow = w.data() + i * cols;
        for (size_t o = 0; o < cols; ++o) y[o] += xi * wrow[o];
    }
}

}  // namespace

void ToyLVLMConfig::validate() const {
    if (vocab_size < 1 || embed_dim < 1 || layers < 1 || heads < 1 || image_tokens < 1) {
        throw std::invalid_argument("toy config dimensions must all be >= 1");
    }
    if (embed_dim % heads != 0) {
        throw std::invalid_argument("embed_dim must be divisible by heads");
    }
    if (max_context < image_tokens + 2) {
        throw std::invalid_argument("max_context too small for image tokens plus a query");
    }
}

struct ToyWeights {
    size_t vocab = 0, d = 0, layers = 0, heads = 0, head_dim = 0, ff = 0;
    std::vector<double> tok_embed;  // vocab x d, also the tied output projection
    struct Layer {
        std::vector<double> wq, wk, wv, wo;  // d x d
        std::vector<double> w1;              // d x ff
        std::vector<double> w2;              // ff x d
    };
    std::vector<Layer> layer;

    // Draw order is fixed: tok_embed, then per layer wq, wk, wv, wo, w1, w2.
    static std::shared_ptr<const ToyWeights> build(const ToyLVLMConfig& cfg) {
        auto w = std::make_shared<ToyWeights>();
        w->vocab = cfg.vocab_size;
        w->d = cfg.embed_dim;
        w->layers = cfg.layers;
        w->heads = cfg.heads;
        w->head_dim = cfg.embed_dim / cfg.heads;
        w->ff = 4 * cfg.embed_dim;

        Rng rng(cfg.weight_seed);
        auto draw = [&rng](std::vector<double>& dst, size_t n) {
            dst.resize(n);
            for (double& x : dst) x = -kInitRange + 2.0 * kInitRange * rng.uniform();
        };
        draw(w->tok_embed, w->vocab * w->d);
        w->layer.resize(w->layers);
        for (auto& l : w->layer) {
            draw(l.wq, w->d * w->d);
            draw(l.wk, w->d * w->d);
            draw(l.wv, w->d * w->d);
            draw(l.wo, w->d * w->d);
            draw(l.w1, w->d * w->ff);
            draw(l.w2, w->ff * w->d);
        }
        return w;
    }
};

namespace {

class ToySession : public BackendSession {
public:
    ToySession(std::shared_ptr<const ToyWeights> weights, const ToyLVLMConfig& cfg)
        : w_(std::move(weights)), cfg_(cfg) {
        kcache_.resize(w_->layers);
        vcache_.resize(w_->layers);
    }

    StepOutput prime(const VisualTokenSet& v, const QueryTokens& q) override {
        if (primed_) throw std::runtime_error("toy session already primed");
        v.validate();
        if (v.count() != cfg_.image_tokens || v.dim() != cfg_.embed_dim) {
            throw std::invalid_argument("visual token set is " + std::to_string(v.count()) + "x" +
                                        std::to_string(v.dim()) + ", model expects " +
                                        std::to_string(cfg_.image_tokens) + "x" +
                                        std::to_string(cfg_.embed_dim));
        }
        q.validate(cfg_.vocab_size);
        const size_t prompt_len = v.count() + q.ids.size();
        if (prompt_len > cfg_.max_context) {
            throw std::runtime_error("prompt length " + std::to_string(prompt_len) +
                                     " exceeds max context " + std::to_string(cfg_.max_context));
        }
        StepOutput out;
        for (size_t j = 0; j < v.count(); ++j) {
            const bool last = q.ids.empty() && j + 1 == v.count();
            std::vector<double> x(v.row(j).begin(), v.row(j).end());
            feed(std::move(x), v.excluded(j), last ? &out : nullptr);
        }
        for (size_t i = 0; i < q.ids.size(); ++i) {
            const bool last = i + 1 == q.ids.size();
            feed(embed(q.ids[i]), false, last ? &out : nullptr);
        }
        primed_ = true;
        return out;
    }

    StepOutput step(TokenId token) override {
        if (!primed_) throw std::runtime_error("toy session not primed");
        if (token < 0 || static_cast<size_t>(token) >= cfg_.vocab_size) {
            throw std::invalid_argument("token id " + std::to_string(token) +
                                        " outside vocabulary");
        }
        if (length_ + 1 > cfg_.max_context) {
            throw std::runtime_error("context overflow at length " + std::to_string(length_));
        }
        StepOutput out;
        feed(embed(token), false, &out);
        return out;
    }

private:
    std::vector<double> embed(TokenId token) const {
        const double* row = w_->tok_embed.data() + static_cast<size_t>(token) * w_->d;
        return {row, row + w_->d};
    }

    // Advance one position through every layer, appending to the KV caches.
    // When capture is set, fills in the logits and the attention rows of
    // this position.
    void feed(std::vector<double> x, bool excluded, StepOutput* capture) {
        const size_t d = w_->d;
        const size_t dh = w_->head_dim;
        const size_t pos = length_;
        excluded_.push_back(excluded ? 1 : 0);

        if (capture) {
            capture->attention =
                AttentionSnapshot(w_->layers, w_->heads, pos + 1, cfg_.image_tokens);
            capture->attention.query_position = pos;
        }

        std::vector<double> q(d), k(d), val(d), attn(d), proj(d), hidden(w_->ff), ff(d);
        std::vector<double> scores(pos + 1), probs(pos + 1);

        for (size_t l = 0; l < w_->layers; ++l) {
            const auto& lw = w_->layer[l];
            matvec(lw.wq, x.data(), d, d, q.data());
            matvec(lw.wk, x.data(), d, d, k.data());
            matvec(lw.wv, x.data(), d, d, val.data());
            kcache_[l].insert(kcache_[l].end(), k.begin(), k.end());
            vcache_[l].insert(vcache_[l].end(), val.begin(), val.end());

            std::fill(attn.begin(), attn.end(), 0.0);
            const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
            for (size_t h = 0; h < w_->heads; ++h) {
                const size_t off = h * dh;
                double max_score = -std::numeric_limits<double>::infinity();
                for (size_t kp = 0; kp <= pos; ++kp) {
                    // excluded positions stay in the sequence but cannot be
                    // attended by other queries
                    if (excluded_[kp] && kp != pos) {
                        scores[kp] = -std::numeric_limits<double>::infinity();
                        continue;
                    }
                    const double* krow = kcache_[l].data() + kp * d + off;
                    double s = 0.0;
                    for (size_t i = 0; i < dh; ++i) s += q[off + i] * krow[i];
                    scores[kp] = s * scale;
                    max_score = std::max(max_score, scores[kp]);
                }
                double sum = 0.0;
                for (size_t kp = 0; kp <= pos; ++kp) {
                    probs[kp] = std::isinf(scores[kp]) ? 0.0 : std::exp(scores[kp] - max_score);
                    sum += probs[kp];
                }
                for (size_t kp = 0; kp <= pos; ++kp) {
                    probs[kp] /= sum;
                    if (capture) capture->attention.at(l, h, kp) = probs[kp];
                    if (probs[kp] == 0.0) continue;
                    const double* vrow = vcache_[l].data() + kp * d + off;
                    for (size_t i = 0; i < dh; ++i) attn[off + i] += probs[kp] * vrow[i];
                }
            }
            matvec(lw.wo, attn.data(), d, d, proj.data());
            for (size_t i = 0; i < d; ++i) x[i] += proj[i];

            matvec(lw.w1, x.data(), d, w_->ff, hidden.data());
            for (double& hx : hidden) hx = gelu(hx);
            matvec(lw.w2, hidden.data(), w_->ff, d, ff.data());
            for (size_t i = 0; i < d; ++i) x[i] += ff[i];
        }

        if (capture) {
            capture->logits.values.resize(w_->vocab);
            for (size_t t = 0; t < w_->vocab; ++t) {
                const double* erow = w_->tok_embed.data() + t * d;
                double s = 0.0;
                for (size_t i = 0; i < d; ++i) s += x[i] * erow[i];
                capture->logits.values[t] = kLogitScale * s;
            }
        }
        ++length_;
    }

    std::shared_ptr<const ToyWeights> w_;
    ToyLVLMConfig cfg_;
    std::vector<std::vector<double>> kcache_, vcache_;  // per layer, pos*d
    std::vector<uint8_t> excluded_;
    size_t length_ = 0;
    bool primed_ = false;
};

}  // namespace

ToyBackend::ToyBackend(const ToyLVLMConfig& config) : config_(config) {
    config_.validate();
    weights_ = ToyWeights::build(config_);
    caps_.supports_biased_stream = true;
    caps_.supports_mask_scheme = true;
    caps_.concurrent_sessions = true;
    caps_.eos_token = 0;
    caps_.vocab_size = config_.vocab_size;
    caps_.image_tokens = config_.image_tokens;
    caps_.embed_dim = config_.embed_dim;
    caps_.layers = config_.layers;
    caps_.heads = config_.heads;
    caps_.max_context = config_.max_context;

    wordlist_.reserve(config_.vocab_size);
    for (size_t i = 0; i < config_.vocab_size; ++i) {
        if (i < kDefaultWordCount) {
            wordlist_.emplace_back(kDefaultWords[i]);
        } else {
            wordlist_.emplace_back("tok" + std::to_string(i));
        }
    }
}

ToyBackend::~ToyBackend() = default;

std::unique_ptr<BackendSession> ToyBackend::open_session(std::string_view) {
    return std::make_unique<ToySession>(weights_, config_);
}

std::optional<TokenId> ToyBackend::token_for_word(std::string_view word) const {
    for (size_t i = 0; i < wordlist_.size(); ++i) {
        if (wordlist_[i] == word) return static_cast<TokenId>(i);
    }
    return std::nullopt;
}

std::string ToyBackend::word_for_token(TokenId token) const {
    if (token < 0 || static_cast<size_t>(token) >= wordlist_.size()) return {};
    return wordlist_[static_cast<size_t>(token)];
}

}  // namespace avisc
