#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "avisc/backend.hpp"
#include "avisc/metrics.hpp"
#include "avisc/types.hpp"

namespace avisc {

// One decode-dataset item. The visual side is either an explicit matrix or
// a seed that materializes one at the backend's dimensions; the query is
// either token ids or text tokenized through the backend vocabulary.
struct VisualSource {
    std::optional<uint64_t> seed;
    std::optional<std::vector<std::vector<double>>> rows;
};

struct DecodeItem {
    std::string id;
    VisualSource visual;
    std::vector<TokenId> query_ids;
    std::string query_text;  // used when query_ids is empty
};

struct ResponseRecord {
    std::string id;
    std::vector<TokenId> token_ids;
    std::string text;
};

struct LabelRecord {
    std::string id;
    std::string image_id;  // MME only
    YesNo label = YesNo::No;
    std::string category;  // MME only, defaults to "all"
};

struct AmberAnnotation {
    std::string id;
    ObjectSet truth;
    ObjectSet hallucination_targets;
};

// All loaders reject malformed input naming the first bad record by line.
std::vector<DecodeItem> load_decode_dataset(const std::filesystem::path& path);
std::vector<ResponseRecord> load_responses(const std::filesystem::path& path);
std::vector<LabelRecord> load_labels(const std::filesystem::path& path);
std::vector<AmberAnnotation> load_amber_annotations(const std::filesystem::path& path);
ObjectLexicon load_lexicon(const std::filesystem::path& path);

// Seeded items get standard-normal rows; explicit rows must match the
// backend dimensions.
VisualTokenSet materialize_visual(const VisualSource& source, size_t image_tokens,
                                  size_t embed_dim);

// Resolve query ids, tokenizing text through the backend when needed.
QueryTokens resolve_query(const DecodeItem& item, const Backend& backend);

}  // namespace avisc
