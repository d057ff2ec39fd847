#include "avisc/dataset.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "avisc/rng.hpp"

namespace avisc {

namespace {

using nlohmann::json;

[[noreturn]] void bad_record(const std::filesystem::path& path, size_t line,
                             const std::string& what) {
    throw std::runtime_error("'" + path.string() + "' line " + std::to_string(line) + ": " + what);
}

// Applies fn to every non-empty line, with 1-based line numbers.
template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            bad_record(path, line_no, std::string("invalid JSON: ") + e.what());
        }
        try {
            fn(record, line_no);
        } catch (const std::exception& e) {
            bad_record(path, line_no, e.what());
        }
    }
}

std::string require_string(const json& record, const char* key) {
    if (!record.contains(key) || !record[key].is_string()) {
        throw std::runtime_error(std::string("missing or non-string field '") + key + "'");
    }
    return record[key].get<std::string>();
}

YesNo require_label(const json& record, const char* key) {
    const std::string raw = require_string(record, key);
    if (raw == "yes") return YesNo::Yes;
    if (raw == "no") return YesNo::No;
    throw std::runtime_error(std::string("field '") + key + "' must be \"yes\" or \"no\", got \"" +
                             raw + "\"");
}

}  // namespace

std::vector<DecodeItem> load_decode_dataset(const std::filesystem::path& path) {
    std::vector<DecodeItem> items;
    for_each_record(path, [&](const json& record, size_t) {
        DecodeItem item;
        item.id = require_string(record, "id");
        if (!record.contains("visual") || !record["visual"].is_object()) {
            throw std::runtime_error("missing 'visual' object");
        }
        const json& visual = record["visual"];
        if (visual.contains("seed")) {
            item.visual.seed = visual["seed"].get<uint64_t>();
        } else if (visual.contains("rows")) {
            item.visual.rows = visual["rows"].get<std::vector<std::vector<double>>>();
        } else {
            throw std::runtime_error("'visual' needs either 'seed' or 'rows'");
        }
        const bool has_ids = record.contains("query_ids");
        const bool has_text = record.contains("query_text");
        if (has_ids == has_text) {
            throw std::runtime_error("exactly one of 'query_ids' or 'query_text' is required");
        }
        if (has_ids) {
            item.query_ids = record["query_ids"].get<std::vector<TokenId>>();
            if (item.query_ids.empty()) throw std::runtime_error("'query_ids' is empty");
        } else {
            item.query_text = require_string(record, "query_text");
        }
        items.push_back(std::move(item));
    });
    if (items.empty()) throw std::runtime_error("dataset '" + path.string() + "' has no items");
    return items;
}

std::vector<ResponseRecord> load_responses(const std::filesystem::path& path) {
    std::vector<ResponseRecord> records;
    for_each_record(path, [&](const json& record, size_t) {
        ResponseRecord r;
        r.id = require_string(record, "id");
        r.text = require_string(record, "text");
        if (record.contains("token_ids")) {
            r.token_ids = record["token_ids"].get<std::vector<TokenId>>();
        }
        records.push_back(std::move(r));
    });
    if (records.empty()) throw std::runtime_error("'" + path.string() + "' has no responses");
    return records;
}

std::vector<LabelRecord> load_labels(const std::filesystem::path& path) {
    std::vector<LabelRecord> records;
    for_each_record(path, [&](const json& record, size_t) {
        LabelRecord r;
        r.id = require_string(record, "id");
        r.label = require_label(record, "label");
        if (record.contains("image_id")) r.image_id = require_string(record, "image_id");
        r.category = record.contains("category") ? require_string(record, "category") : "all";
        records.push_back(std::move(r));
    });
    if (records.empty()) throw std::runtime_error("'" + path.string() + "' has no labels");
    return records;
}

std::vector<AmberAnnotation> load_amber_annotations(const std::filesystem::path& path) {
    std::vector<AmberAnnotation> records;
    for_each_record(path, [&](const json& record, size_t) {
        AmberAnnotation a;
        a.id = require_string(record, "id");
        if (!record.contains("truth") || !record["truth"].is_array()) {
            throw std::runtime_error("missing 'truth' array");
        }
        for (const auto& obj : record["truth"]) a.truth.insert(obj.get<std::string>());
        if (record.contains("hallu")) {
            for (const auto& obj : record["hallu"]) {
                a.hallucination_targets.insert(obj.get<std::string>());
            }
        }
        records.push_back(std::move(a));
    });
    if (records.empty()) throw std::runtime_error("'" + path.string() + "' has no annotations");
    return records;
}

ObjectLexicon load_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open lexicon '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("lexicon '" + path.string() + "': " + e.what());
    }
    if (!doc.is_object() || doc.empty()) {
        throw std::runtime_error("lexicon '" + path.string() +
                                 "' must be a non-empty object of canonical -> synonyms");
    }
    ObjectLexicon lexicon;
    for (const auto& [canonical, synonyms] : doc.items()) {
        lexicon.add(canonical, synonyms.get<std::vector<std::string>>());
    }
    return lexicon;
}

VisualTokenSet materialize_visual(const VisualSource& source, size_t image_tokens,
                                  size_t embed_dim) {
    if (source.rows.has_value()) {
        VisualTokenSet v = VisualTokenSet::from_rows(*source.rows);
        if (v.count() != image_tokens || v.dim() != embed_dim) {
            throw std::invalid_argument("visual rows are " + std::to_string(v.count()) + "x" +
                                        std::to_string(v.dim()) + ", backend expects " +
                                        std::to_string(image_tokens) + "x" +
                                        std::to_string(embed_dim));
        }
        return v;
    }
    if (!source.seed.has_value()) {
        throw std::invalid_argument("visual source has neither seed nor rows");
    }
    VisualTokenSet v(image_tokens, embed_dim);
    Rng rng(derive_seed(*source.seed, "visual-rows"));
    for (double& x : v.data()) x = rng.normal();
    return v;
}

QueryTokens resolve_query(const DecodeItem& item, const Backend& backend) {
    QueryTokens q;
    if (!item.query_ids.empty()) {
        q.ids = item.query_ids;
        return q;
    }
    std::istringstream words(item.query_text);
    std::string word;
    while (words >> word) {
        const auto id = backend.token_for_word(word);
        if (!id.has_value()) {
            throw std::invalid_argument("item '" + item.id + "': word '" + word +
                                        "' is not in the backend vocabulary");
        }
        q.ids.push_back(*id);
    }
    if (q.ids.empty()) {
        throw std::invalid_argument("item '" + item.id + "' has an empty query");
    }
    return q;
}

}  // namespace avisc
