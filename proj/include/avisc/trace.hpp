#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "avisc/backend.hpp"
#include "avisc/decoding.hpp"

namespace avisc {

inline constexpr uint32_t kTraceVersion = 1;

// On-disk layout is little-endian and single precision; see
// docs/trace_format.md for the field-by-field reference.
struct TraceHeader {
    uint32_t version = kTraceVersion;
    std::string model_name;
    uint32_t vocab_size = 0;
    uint32_t image_tokens = 0;  // N
    uint32_t embed_dim = 0;     // D
    uint32_t layers = 0;        // L
    uint32_t heads = 0;         // H
    TokenId eos_token = 0;
    bool has_biased_logits = false;

    bool operator==(const TraceHeader&) const = default;
};

struct TraceStep {
    uint32_t step_index = 0;
    uint32_t key_count = 0;            // keys at this step, >= image_tokens
    std::vector<float> attention;      // layers * heads * key_count
    std::vector<float> logits;         // vocab_size
    std::vector<float> biased_logits;  // vocab_size when header flag set, else empty
    TokenId chosen_token = 0;

    bool operator==(const TraceStep&) const = default;
};

struct TraceFile {
    TraceHeader header;
    std::vector<TraceStep> steps;

    bool operator==(const TraceFile&) const = default;
};

void trace_write(const TraceFile& trace, const std::filesystem::path& path);

// Throws std::runtime_error with byte offset and step index on malformed
// or truncated input, and an explicit message on version mismatch.
TraceFile trace_load(const std::filesystem::path& path);

// Capture a live decode into a trace. Steps where no biased stream ran
// store the original logits in the biased slot (contrast-neutral).
TraceFile record_trace(Backend& backend, const VisualTokenSet& v, const QueryTokens& q,
                       const DecodeParams& params, std::string_view item_id = "");

// Replays recorded sessions. A file path serves every item the same trace;
// a directory resolves <item_id>.avtr per item.
class TraceBackend : public Backend {
public:
    explicit TraceBackend(const std::filesystem::path& path);

    const BackendCaps& caps() const override { return caps_; }
    std::unique_ptr<BackendSession> open_session(std::string_view item_id) override;
    std::string name() const override { return "trace"; }

private:
    std::shared_ptr<const TraceFile> trace_for(std::string_view item_id);

    std::filesystem::path path_;
    bool directory_ = false;
    BackendCaps caps_;
    std::shared_ptr<const TraceFile> single_;
    std::mutex cache_mutex_;
    std::map<std::string, std::shared_ptr<const TraceFile>, std::less<>> cache_;
};

}  // namespace avisc
