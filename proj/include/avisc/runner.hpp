#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "avisc/dataset.hpp"
#include "avisc/decoding.hpp"
#include "avisc/toy_model.hpp"

namespace avisc {

// Everything a decode run needs. Per-item seeds are derived from the
// global seed and the item id, so worker count and item order cannot
// change results.
struct RunConfig {
    std::string backend = "toy";  // "toy" or "trace:PATH"
    ToyLVLMConfig toy;
    DecodeParams decode;
    std::string dataset;
    std::string out_dir;
    size_t jobs = 1;
    uint64_t seed = 0;

    // echo for the result bundle; out_dir stays out so a bundle can be
    // reproduced anywhere
    nlohmann::json to_json() const;
    // fields present in doc override base
    static RunConfig from_json(const nlohmann::json& doc);
    static RunConfig from_json(const nlohmann::json& doc, RunConfig base);
};

nlohmann::json to_json(const CalibrationReport& report);
nlohmann::json to_json(const StepDiagnostics& diag);

std::unique_ptr<Backend> make_backend(const RunConfig& config);

struct RunSummary {
    size_t items = 0;
    std::filesystem::path responses_path;
    std::filesystem::path diagnostics_path;
    std::filesystem::path config_path;
};

// Decode every dataset item and write responses.jsonl, diagnostics.jsonl,
// config.json and run_meta.json (timing only) under out_dir. Output order
// is by item id regardless of parallelism.
RunSummary run_decode(const RunConfig& config);

struct PopeReport {
    PopeScores scores;
    size_t total = 0;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

PopeReport eval_pope(const std::vector<ResponseRecord>& responses,
                     const std::vector<LabelRecord>& annotations);
PopeReport run_eval_pope(const std::filesystem::path& responses,
                         const std::filesystem::path& annotations,
                         const std::filesystem::path& out_dir);

struct MmeCategoryScore {
    MmeScores scores;
    size_t images = 0;
};

struct MmeReport {
    std::map<std::string, MmeCategoryScore> categories;
    double total = 0.0;  // sum of category scores
    size_t unparsed = 0;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

MmeReport eval_mme(const std::vector<ResponseRecord>& responses,
                   const std::vector<LabelRecord>& annotations);
MmeReport run_eval_mme(const std::filesystem::path& responses,
                       const std::filesystem::path& annotations,
                       const std::filesystem::path& out_dir);

struct AmberGenerative {
    double chair_pct = 0.0;
    double cover_pct = 0.0;
    double hal_pct = 0.0;
    double cog_pct = 0.0;
    size_t items = 0;
    size_t empty_truth = 0;  // annotations with no truth objects (Cover pinned to 0)
};

struct AmberReport {
    AmberGenerative generative;
    PopeScores discriminative;  // fractions; percentages derived for display
    size_t discriminative_total = 0;
    double amber = 0.0;  // ((100 - CHAIR) + F1) / 2

    nlohmann::json to_json() const;
    std::string to_text() const;
};

AmberReport eval_amber(const std::vector<ResponseRecord>& generative_responses,
                       const std::vector<AmberAnnotation>& generative_annotations,
                       const ObjectLexicon& lexicon,
                       const std::vector<ResponseRecord>& discriminative_responses,
                       const std::vector<LabelRecord>& discriminative_annotations);
AmberReport run_eval_amber(const std::filesystem::path& generative_responses,
                           const std::filesystem::path& generative_annotations,
                           const std::filesystem::path& lexicon,
                           const std::filesystem::path& discriminative_responses,
                           const std::filesystem::path& discriminative_annotations,
                           const std::filesystem::path& out_dir);

struct AblateSpec {
    std::vector<double> alphas;
    std::vector<double> lambdas;
    std::vector<DeactivationScheme> schemes;
};

struct AblateRow {
    double alpha = 0.0;
    double lambda = 0.0;
    DeactivationScheme scheme = DeactivationScheme::Zeros;
    size_t items = 0;
    size_t total_tokens = 0;
    double contrast_rate = 0.0;   // steps that applied contrast / all steps
    double fallback_rate = 0.0;   // calibrated steps that fell back / calibrated steps
    double mean_blind = 0.0;      // blind tokens per calibrated step
    double mean_allowed = 0.0;    // plausibility set size per step
    uint64_t responses_digest = 0;
    std::optional<PopeScores> pope;  // present when annotations were supplied
};

struct AblateReport {
    std::vector<AblateRow> rows;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

// Cartesian sweep over (alpha, lambda, scheme) with the avisc method; each
// run lands in its own subdirectory of base.out_dir.
AblateReport run_ablate(const RunConfig& base, const AblateSpec& spec,
                        const std::optional<std::filesystem::path>& pope_annotations);

}  // namespace avisc
