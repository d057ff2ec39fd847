#include "avisc/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace avisc {

VisualTokenSet VisualTokenSet::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty() || rows.front().empty()) {
        throw std::invalid_argument("visual token set needs at least one row and one column");
    }
    VisualTokenSet v(rows.size(), rows.front().size());
    for (size_t j = 0; j < rows.size(); ++j) {
        if (rows[j].size() != v.dim()) {
            throw std::invalid_argument("visual token row " + std::to_string(j) +
                                        " has inconsistent width");
        }
        std::copy(rows[j].begin(), rows[j].end(), v.row(j).begin());
    }
    v.validate();
    return v;
}

bool VisualTokenSet::any_excluded() const {
    return std::any_of(excluded_.begin(), excluded_.end(), [](uint8_t f) { return f != 0; });
}

void VisualTokenSet::validate() const {
    if (count_ == 0 || dim_ == 0) {
        throw std::invalid_argument("visual token set must have N >= 1 and D >= 1");
    }
    for (size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw std::invalid_argument("visual token entry (" + std::to_string(i / dim_) + ", " +
                                        std::to_string(i % dim_) + ") is not finite");
        }
    }
}

void QueryTokens::validate(size_t vocab_size) const {
    if (ids.empty()) {
        throw std::invalid_argument("query must contain at least one token");
    }
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<size_t>(ids[i]) >= vocab_size) {
            throw std::invalid_argument("query token " + std::to_string(i) + " (id " +
                                        std::to_string(ids[i]) + ") outside vocabulary of size " +
                                        std::to_string(vocab_size));
        }
    }
}

void Distribution::validate() const {
    double sum = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        const double p = probs[i];
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw std::invalid_argument("probability at index " + std::to_string(i) +
                                        " is negative or non-finite");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > kDistributionTol) {
        throw std::invalid_argument("probabilities sum to " + std::to_string(sum) +
                                    ", expected 1 within 1e-6");
    }
}

Distribution softmax(const LogitVector& logits) {
    if (logits.values.empty()) {
        throw std::invalid_argument("softmax over empty logit vector");
    }
    double max_logit = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < logits.values.size(); ++i) {
        if (!std::isfinite(logits.values[i])) {
            throw std::invalid_argument("logit at index " + std::to_string(i) + " is not finite");
        }
        max_logit = std::max(max_logit, logits.values[i]);
    }
    Distribution dist;
    dist.probs.resize(logits.values.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.values.size(); ++i) {
        const double e = std::exp(logits.values[i] - max_logit);
        dist.probs[i] = e;
        sum += e;
    }
    for (double& p : dist.probs) p /= sum;
    return dist;
}

ValidationResult validate_snapshot(const AttentionSnapshot& snap) {
    if (snap.layers == 0 || snap.heads == 0 || snap.keys == 0) {
        return {false, "snapshot has empty layer/head/key dimension"};
    }
    if (snap.weights.size() != snap.layers * snap.heads * snap.keys) {
        return {false, "weight buffer size does not match layers*heads*keys"};
    }
    if (snap.keys < snap.image_token_count) {
        return {false, "keys (" + std::to_string(snap.keys) + ") do not cover the image span (" +
                           std::to_string(snap.image_token_count) + ")"};
    }
    for (size_t l = 0; l < snap.layers; ++l) {
        for (size_t h = 0; h < snap.heads; ++h) {
            double row_sum = 0.0;
            for (size_t k = 0; k < snap.keys; ++k) {
                const double w = snap.at(l, h, k);
                if (!std::isfinite(w)) {
                    return {false, "non-finite weight at layer " + std::to_string(l) + ", head " +
                                       std::to_string(h) + ", key " + std::to_string(k)};
                }
                if (w < 0.0 || w > 1.0) {
                    return {false, "weight " + std::to_string(w) + " outside [0,1] at layer " +
                                       std::to_string(l) + ", head " + std::to_string(h) +
                                       ", key " + std::to_string(k)};
                }
                row_sum += w;
            }
            if (std::abs(row_sum - 1.0) > kAttentionRowTol) {
                return {false, "row sum " + std::to_string(row_sum) + " at layer " +
                                   std::to_string(l) + ", head " + std::to_string(h) +
                                   " outside 1 +/- 1e-4"};
            }
        }
    }
    return {true, ""};
}

}  // namespace avisc
