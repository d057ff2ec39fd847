#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace avisc {

using TokenId = int32_t;

// Attention rows from real models arrive in single precision; row sums are
// checked against this tolerance.
inline constexpr double kAttentionRowTol = 1e-4;
inline constexpr double kDistributionTol = 1e-6;

// Raised by layer_attention_proportions when the snapshot carries zero
// attention mass on the image span. Callers may substitute uniform
// proportions and continue.
class DegenerateAttentionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Projected image-token rows (N x D). Rows can additionally be flagged
// excluded: the Mask deactivation scheme keeps the row in storage but tells
// the backend to drop the position from attention.
class VisualTokenSet {
public:
    VisualTokenSet() = default;
    VisualTokenSet(size_t count, size_t dim)
        : count_(count), dim_(dim), data_(count * dim, 0.0), excluded_(count, 0) {}

    static VisualTokenSet from_rows(const std::vector<std::vector<double>>& rows);

    size_t count() const { return count_; }
    size_t dim() const { return dim_; }

    std::span<double> row(size_t j) { return {data_.data() + j * dim_, dim_}; }
    std::span<const double> row(size_t j) const { return {data_.data() + j * dim_, dim_}; }

    double& at(size_t j, size_t k) { return data_[j * dim_ + k]; }
    double at(size_t j, size_t k) const { return data_[j * dim_ + k]; }

    bool excluded(size_t j) const { return excluded_[j] != 0; }
    void set_excluded(size_t j, bool value) { excluded_[j] = value ? 1 : 0; }
    bool any_excluded() const;

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    // throws std::invalid_argument on empty dims or non-finite entries
    void validate() const;

private:
    size_t count_ = 0;
    size_t dim_ = 0;
    std::vector<double> data_;
    std::vector<uint8_t> excluded_;
};

struct QueryTokens {
    std::vector<TokenId> ids;

    void validate(size_t vocab_size) const;
};

// Per-step attention of the current query row: layers x heads x keys.
// Keys [0, image_token_count) are the image positions.
struct AttentionSnapshot {
    size_t layers = 0;
    size_t heads = 0;
    size_t keys = 0;
    size_t query_position = 0;
    size_t image_token_count = 0;
    std::vector<double> weights;  // layer-major, then head, then key

    AttentionSnapshot() = default;
    AttentionSnapshot(size_t layers, size_t heads, size_t keys, size_t image_tokens)
        : layers(layers),
          heads(heads),
          keys(keys),
          image_token_count(image_tokens),
          weights(layers * heads * keys, 0.0) {}

    double at(size_t layer, size_t head, size_t key) const {
        return weights[(layer * heads + head) * keys + key];
    }
    double& at(size_t layer, size_t head, size_t key) {
        return weights[(layer * heads + head) * keys + key];
    }
};

struct LogitVector {
    std::vector<double> values;

    LogitVector() = default;
    explicit LogitVector(std::vector<double> v) : values(std::move(v)) {}
    size_t size() const { return values.size(); }
};

struct Distribution {
    std::vector<double> probs;

    size_t size() const { return probs.size(); }
    // throws std::invalid_argument unless entries are >= 0 and sum to 1
    void validate() const;
};

struct ValidationResult {
    bool ok = true;
    std::string message;

    explicit operator bool() const { return ok; }
};

// Numerically stabilized softmax (max subtracted before exponentiation).
// Throws std::invalid_argument naming the first non-finite index.
Distribution softmax(const LogitVector& logits);

// Checks every AttentionSnapshot invariant; failures identify the
// offending (layer, head) or entry. Never throws.
ValidationResult validate_snapshot(const AttentionSnapshot& snap);

}  // namespace avisc
