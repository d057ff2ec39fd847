#include "avisc/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "avisc/rng.hpp"
#include "avisc/trace.hpp"
#include "avisc/version.hpp"

namespace avisc {

namespace {

using nlohmann::json;

std::string hex64(uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// compact %g rendering for directory names and tables
std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

const char* distortion_name(DistortionKind kind) {
    return kind == DistortionKind::GaussianNoise ? "gaussian" : "zero";
}

DistortionKind distortion_from_string(const std::string& name) {
    if (name == "gaussian") return DistortionKind::GaussianNoise;
    if (name == "zero") return DistortionKind::ZeroAll;
    throw std::invalid_argument("unknown distortion '" + name + "' (expected gaussian|zero)");
}

}  // namespace

json RunConfig::to_json() const {
    json doc;
    doc["backend"] = backend;
    doc["dataset"] = dataset;
    doc["jobs"] = jobs;
    doc["seed"] = seed;
    doc["tool_version"] = kVersion;
    doc["decode"] = {
        {"method", to_string(decode.method)},
        {"strategy", to_string(decode.strategy)},
        {"alpha", decode.alpha},
        {"beta", decode.beta},
        {"max_tokens", decode.max_tokens},
        {"freeze_blind", decode.freeze_blind},
    };
    doc["calibration"] = {
        {"gamma", decode.calibration.gamma},
        {"lambda", decode.calibration.lambda},
        {"scheme", to_string(decode.calibration.scheme)},
    };
    doc["distortion"] = {
        {"kind", distortion_name(decode.distortion.kind)},
        {"strength", decode.distortion.strength},
    };
    doc["toy"] = {
        {"vocab_size", toy.vocab_size},   {"embed_dim", toy.embed_dim},
        {"layers", toy.layers},           {"heads", toy.heads},
        {"image_tokens", toy.image_tokens}, {"max_context", toy.max_context},
        {"weight_seed", toy.weight_seed},
    };
    return doc;
}

RunConfig RunConfig::from_json(const json& doc) { return from_json(doc, RunConfig{}); }

RunConfig RunConfig::from_json(const json& doc, RunConfig base) {
    RunConfig config = std::move(base);
    if (doc.contains("backend")) config.backend = doc["backend"].get<std::string>();
    if (doc.contains("dataset")) config.dataset = doc["dataset"].get<std::string>();
    if (doc.contains("jobs")) config.jobs = doc["jobs"].get<size_t>();
    if (doc.contains("seed")) config.seed = doc["seed"].get<uint64_t>();
    if (doc.contains("decode")) {
        const json& d = doc["decode"];
        if (d.contains("method")) config.decode.method = method_from_string(d["method"]);
        if (d.contains("strategy")) config.decode.strategy = strategy_from_string(d["strategy"]);
        if (d.contains("alpha")) config.decode.alpha = d["alpha"].get<double>();
        if (d.contains("beta")) config.decode.beta = d["beta"].get<double>();
        if (d.contains("max_tokens")) config.decode.max_tokens = d["max_tokens"].get<size_t>();
        if (d.contains("freeze_blind")) {
            config.decode.freeze_blind = d["freeze_blind"].get<bool>();
        }
    }
    if (doc.contains("calibration")) {
        const json& c = doc["calibration"];
        if (c.contains("gamma")) config.decode.calibration.gamma = c["gamma"].get<double>();
        if (c.contains("lambda")) config.decode.calibration.lambda = c["lambda"].get<double>();
        if (c.contains("scheme")) {
            config.decode.calibration.scheme = scheme_from_string(c["scheme"]);
        }
    }
    if (doc.contains("distortion")) {
        const json& d = doc["distortion"];
        if (d.contains("kind")) config.decode.distortion.kind = distortion_from_string(d["kind"]);
        if (d.contains("strength")) {
            config.decode.distortion.strength = d["strength"].get<double>();
        }
    }
    if (doc.contains("toy")) {
        const json& t = doc["toy"];
        if (t.contains("vocab_size")) config.toy.vocab_size = t["vocab_size"].get<size_t>();
        if (t.contains("embed_dim")) config.toy.embed_dim = t["embed_dim"].get<size_t>();
        if (t.contains("layers")) config.toy.layers = t["layers"].get<size_t>();
        if (t.contains("heads")) config.toy.heads = t["heads"].get<size_t>();
        if (t.contains("image_tokens")) config.toy.image_tokens = t["image_tokens"].get<size_t>();
        if (t.contains("max_context")) config.toy.max_context = t["max_context"].get<size_t>();
        if (t.contains("weight_seed")) config.toy.weight_seed = t["weight_seed"].get<uint64_t>();
    }
    return config;
}

json to_json(const CalibrationReport& report) {
    return json{
        {"layer_proportions", report.layer_proportions},
        {"selected_layers", report.selected_layers},
        {"image_profile", report.image_profile},
        {"mean", report.mean},
        {"stddev", report.stddev},
        {"blind_indices", report.blind_indices},
        {"fallback_used", report.fallback_used},
        {"degenerate_attention", report.degenerate_attention},
    };
}

json to_json(const StepDiagnostics& diag) {
    json doc{
        {"step", diag.step},
        {"base_logits_digest", hex64(diag.base_logits_digest)},
        {"contrast_applied", diag.contrast_applied},
        {"allowed_count", diag.allowed_count},
        {"chosen_token", diag.chosen_token},
    };
    if (diag.calibration.has_value()) doc["calibration"] = to_json(*diag.calibration);
    return doc;
}

std::unique_ptr<Backend> make_backend(const RunConfig& config) {
    if (config.backend == "toy") {
        return std::make_unique<ToyBackend>(config.toy);
    }
    if (config.backend.rfind("trace:", 0) == 0) {
        const std::string path = config.backend.substr(6);
        if (path.empty()) throw std::invalid_argument("trace backend needs a path: trace:PATH");
        return std::make_unique<TraceBackend>(path);
    }
    throw std::invalid_argument("unknown backend '" + config.backend +
                                "' (expected toy or trace:PATH)");
}

namespace {

struct ItemOutput {
    std::string id;
    DecodeResult result;
    std::string text;
};

std::string render_text(const Backend& backend, const std::vector<TokenId>& tokens) {
    std::string text;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) text += ' ';
        const std::string word = backend.word_for_token(tokens[i]);
        if (word.empty()) {
            text += '#';
            text += std::to_string(tokens[i]);
        } else {
            text += word;
        }
    }
    return text;
}

// usage errors surface before any decoding starts
void check_usage(const RunConfig& config, const Backend& backend,
                 const std::vector<DecodeItem>& items) {
    config.decode.validate();
    const BackendCaps& caps = backend.caps();
    if (config.decode.method != DecodeMethod::Base && !caps.supports_biased_stream) {
        throw std::invalid_argument("method '" + std::string(to_string(config.decode.method)) +
                                    "' needs a biased stream, which backend '" + backend.name() +
                                    "' does not provide");
    }
    if (config.decode.method == DecodeMethod::Avisc &&
        config.decode.calibration.scheme == DeactivationScheme::Mask &&
        !caps.supports_mask_scheme) {
        throw std::invalid_argument("the mask scheme is not supported by backend '" +
                                    backend.name() + "'");
    }
    std::set<std::string> seen;
    for (const DecodeItem& item : items) {
        if (!seen.insert(item.id).second) {
            throw std::invalid_argument("duplicate item id '" + item.id + "' in dataset");
        }
    }
}

std::vector<ItemOutput> decode_items(const RunConfig& config, Backend& backend,
                                     const std::vector<DecodeItem>& items) {
    const BackendCaps& caps = backend.caps();
    const size_t jobs =
        caps.concurrent_sessions ? std::max<size_t>(1, config.jobs) : size_t{1};

    std::vector<ItemOutput> outputs(items.size());
    std::atomic<size_t> cursor{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto work = [&] {
        while (!failed.load(std::memory_order_relaxed)) {
            const size_t i = cursor.fetch_add(1);
            if (i >= items.size()) break;
            try {
                const DecodeItem& item = items[i];
                const uint64_t item_seed = derive_seed(config.seed, item.id);
                DecodeParams params = config.decode;
                params.rng_seed = derive_seed(item_seed, "rng");
                params.calibration.noise_seed = derive_seed(item_seed, "noise");

                const VisualTokenSet visual =
                    materialize_visual(item.visual, caps.image_tokens, caps.embed_dim);
                const QueryTokens query = resolve_query(item, backend);

                ItemOutput out;
                out.id = item.id;
                out.result = decode(backend, visual, query, params, item.id);
                out.text = render_text(backend, out.result.tokens);
                outputs[i] = std::move(out);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };

    if (jobs <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(jobs);
        for (size_t i = 0; i < jobs; ++i) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);

    std::sort(outputs.begin(), outputs.end(),
              [](const ItemOutput& a, const ItemOutput& b) { return a.id < b.id; });
    return outputs;
}

}  // namespace

RunSummary run_decode(const RunConfig& config) {
    using clock = std::chrono::steady_clock;
    const auto started = clock::now();

    if (config.dataset.empty()) throw std::invalid_argument("no dataset given");
    if (config.out_dir.empty()) throw std::invalid_argument("no output directory given");
    const auto items = load_decode_dataset(config.dataset);
    auto backend = make_backend(config);
    check_usage(config, *backend, items);

    const auto outputs = decode_items(config, *backend, items);

    std::filesystem::create_directories(config.out_dir);
    std::ostringstream responses, diagnostics;
    for (const ItemOutput& out : outputs) {
        json response{
            {"id", out.id},
            {"token_ids", out.result.tokens},
            {"text", out.text},
            {"eos", out.result.hit_eos},
        };
        responses << response.dump() << '\n';
        json diag{{"id", out.id}};
        json steps = json::array();
        for (const StepDiagnostics& step : out.result.steps) steps.push_back(to_json(step));
        diag["steps"] = std::move(steps);
        diagnostics << diag.dump() << '\n';
    }

    RunSummary summary;
    summary.items = outputs.size();
    const std::filesystem::path out_dir(config.out_dir);
    summary.responses_path = out_dir / "responses.jsonl";
    summary.diagnostics_path = out_dir / "diagnostics.jsonl";
    summary.config_path = out_dir / "config.json";
    write_file(summary.responses_path, responses.str());
    write_file(summary.diagnostics_path, diagnostics.str());
    write_file(summary.config_path, config.to_json().dump(2) + "\n");

    const auto wall_ms =
        std::chrono::duration<double, std::milli>(clock::now() - started).count();
    json meta{{"items", outputs.size()},
              {"seed", config.seed},
              {"wall_ms", wall_ms},
              {"tool_version", kVersion}};
    write_file(out_dir / "run_meta.json", meta.dump(2) + "\n");
    return summary;
}

namespace {

// annotation id -> parsed prediction; every annotation must have a response
std::vector<BinaryOutcome> pair_outcomes(const std::vector<ResponseRecord>& responses,
                                         const std::vector<LabelRecord>& annotations) {
    std::map<std::string, const ResponseRecord*> by_id;
    for (const ResponseRecord& r : responses) by_id[r.id] = &r;
    std::vector<BinaryOutcome> outcomes;
    outcomes.reserve(annotations.size());
    for (const LabelRecord& label : annotations) {
        const auto it = by_id.find(label.id);
        if (it == by_id.end()) {
            throw std::runtime_error("no response for annotated id '" + label.id + "'");
        }
        outcomes.push_back(BinaryOutcome{parse_yes_no(it->second->text), label.label});
    }
    return outcomes;
}

}  // namespace

PopeReport eval_pope(const std::vector<ResponseRecord>& responses,
                     const std::vector<LabelRecord>& annotations) {
    PopeReport report;
    const auto outcomes = pair_outcomes(responses, annotations);
    report.scores = pope_scores(outcomes);
    report.total = outcomes.size();
    return report;
}

json PopeReport::to_json() const {
    return json{
        {"accuracy", scores.accuracy},
        {"precision", scores.precision},
        {"recall", scores.recall},
        {"f1", scores.f1},
        {"zero_division", scores.zero_division},
        {"counts",
         {{"tp", scores.true_positive},
          {"fp", scores.false_positive},
          {"tn", scores.true_negative},
          {"fn", scores.false_negative}}},
        {"total", total},
        {"unparsed", scores.unparsed},
    };
}

std::string PopeReport::to_text() const {
    std::ostringstream out;
    out << "POPE results (" << total << " questions, " << scores.unparsed << " unparsed)\n";
    char line[160];
    std::snprintf(line, sizeof(line),
                  "  accuracy %.4f  precision %.4f  recall %.4f  f1 %.4f\n", scores.accuracy,
                  scores.precision, scores.recall, scores.f1);
    out << line;
    std::snprintf(line, sizeof(line), "  tp %zu  fp %zu  tn %zu  fn %zu\n", scores.true_positive,
                  scores.false_positive, scores.true_negative, scores.false_negative);
    out << line;
    if (scores.zero_division) out << "  note: a zero denominator pinned a score to 0\n";
    return out.str();
}

PopeReport run_eval_pope(const std::filesystem::path& responses,
                         const std::filesystem::path& annotations,
                         const std::filesystem::path& out_dir) {
    const PopeReport report = eval_pope(load_responses(responses), load_labels(annotations));
    std::filesystem::create_directories(out_dir);
    write_file(out_dir / "metrics.json", report.to_json().dump(2) + "\n");
    write_file(out_dir / "metrics.txt", report.to_text());
    return report;
}

MmeReport eval_mme(const std::vector<ResponseRecord>& responses,
                   const std::vector<LabelRecord>& annotations) {
    std::map<std::string, const ResponseRecord*> by_id;
    for (const ResponseRecord& r : responses) by_id[r.id] = &r;

    // category -> image -> questions, insertion order inside an image kept
    std::map<std::string, std::map<std::string, MmeItem>> grouped;
    MmeReport report;
    for (const LabelRecord& label : annotations) {
        const auto it = by_id.find(label.id);
        if (it == by_id.end()) {
            throw std::runtime_error("no response for annotated id '" + label.id + "'");
        }
        if (label.image_id.empty()) {
            throw std::runtime_error("annotation '" + label.id + "' is missing image_id");
        }
        const YesNo prediction = parse_yes_no(it->second->text);
        if (prediction == YesNo::Unparsed) ++report.unparsed;
        MmeItem& item = grouped[label.category][label.image_id];
        item.image_id = label.image_id;
        item.questions.push_back(MmeQuestion{label.label, prediction});
    }
    for (const auto& [category, images] : grouped) {
        std::vector<MmeItem> items;
        items.reserve(images.size());
        for (const auto& [image_id, item] : images) {
            if (item.questions.size() != 2) {
                throw std::runtime_error("image '" + image_id + "' in category '" + category +
                                         "' has " + std::to_string(item.questions.size()) +
                                         " questions, expected exactly 2");
            }
            items.push_back(item);
        }
        MmeCategoryScore score;
        score.scores = mme_scores(items);
        score.images = items.size();
        report.total += score.scores.score;
        report.categories[category] = score;
    }
    return report;
}

json MmeReport::to_json() const {
    json cats = json::object();
    for (const auto& [name, cat] : categories) {
        cats[name] = {
            {"acc", cat.scores.acc},
            {"acc_plus", cat.scores.acc_plus},
            {"score", cat.scores.score},
            {"images", cat.images},
        };
    }
    return json{{"categories", cats}, {"total", total}, {"unparsed", unparsed}};
}

std::string MmeReport::to_text() const {
    std::ostringstream out;
    out << "MME results (" << unparsed << " unparsed)\n";
    char line[160];
    for (const auto& [name, cat] : categories) {
        std::snprintf(line, sizeof(line), "  %-16s score %7.2f  (acc %.4f, acc+ %.4f, %zu images)\n",
                      name.c_str(), cat.scores.score, cat.scores.acc, cat.scores.acc_plus,
                      cat.images);
        out << line;
    }
    std::snprintf(line, sizeof(line), "  %-16s %7.2f\n", "total", total);
    out << line;
    return out.str();
}

MmeReport run_eval_mme(const std::filesystem::path& responses,
                       const std::filesystem::path& annotations,
                       const std::filesystem::path& out_dir) {
    const MmeReport report = eval_mme(load_responses(responses), load_labels(annotations));
    std::filesystem::create_directories(out_dir);
    write_file(out_dir / "metrics.json", report.to_json().dump(2) + "\n");
    write_file(out_dir / "metrics.txt", report.to_text());
    return report;
}

AmberReport eval_amber(const std::vector<ResponseRecord>& generative_responses,
                       const std::vector<AmberAnnotation>& generative_annotations,
                       const ObjectLexicon& lexicon,
                       const std::vector<ResponseRecord>& discriminative_responses,
                       const std::vector<LabelRecord>& discriminative_annotations) {
    std::map<std::string, const ResponseRecord*> by_id;
    for (const ResponseRecord& r : generative_responses) by_id[r.id] = &r;

    AmberReport report;
    double chair_sum = 0, cover_sum = 0, hal_sum = 0, cog_sum = 0;
    for (const AmberAnnotation& ann : generative_annotations) {
        const auto it = by_id.find(ann.id);
        if (it == by_id.end()) {
            throw std::runtime_error("no generative response for annotated id '" + ann.id + "'");
        }
        const ObjectSet mentioned = extract_objects(it->second->text, lexicon);
        const double c = chair(mentioned, ann.truth);
        chair_sum += c;
        cover_sum += cover(mentioned, ann.truth);
        hal_sum += hal(c);
        cog_sum += cog(mentioned, ann.hallucination_targets);
        if (ann.truth.empty()) ++report.generative.empty_truth;
    }
    const double n = static_cast<double>(generative_annotations.size());
    report.generative.items = generative_annotations.size();
    report.generative.chair_pct = 100.0 * chair_sum / n;
    report.generative.cover_pct = 100.0 * cover_sum / n;
    report.generative.hal_pct = 100.0 * hal_sum / n;
    report.generative.cog_pct = 100.0 * cog_sum / n;

    const auto outcomes = pair_outcomes(discriminative_responses, discriminative_annotations);
    report.discriminative = pope_scores(outcomes);
    report.discriminative_total = outcomes.size();

    report.amber = amber_score(report.generative.chair_pct, 100.0 * report.discriminative.f1);
    return report;
}

json AmberReport::to_json() const {
    return json{
        {"generative",
         {{"chair", generative.chair_pct},
          {"cover", generative.cover_pct},
          {"hal", generative.hal_pct},
          {"cog", generative.cog_pct},
          {"items", generative.items},
          {"empty_truth", generative.empty_truth}}},
        {"discriminative",
         {{"accuracy", 100.0 * discriminative.accuracy},
          {"precision", 100.0 * discriminative.precision},
          {"recall", 100.0 * discriminative.recall},
          {"f1", 100.0 * discriminative.f1},
          {"total", discriminative_total},
          {"unparsed", discriminative.unparsed},
          {"zero_division", discriminative.zero_division}}},
        {"amber_score", amber},
    };
}

std::string AmberReport::to_text() const {
    std::ostringstream out;
    char line[200];
    std::snprintf(line, sizeof(line),
                  "AMBER generative (%zu items, %zu with empty truth sets)\n"
                  "  CHAIR %.2f  Cover %.2f  Hal %.2f  Cog %.2f\n",
                  generative.items, generative.empty_truth, generative.chair_pct,
                  generative.cover_pct, generative.hal_pct, generative.cog_pct);
    out << line;
    std::snprintf(line, sizeof(line),
                  "AMBER discriminative (%zu questions, %zu unparsed)\n"
                  "  accuracy %.2f  precision %.2f  recall %.2f  f1 %.2f\n",
                  discriminative_total, discriminative.unparsed, 100.0 * discriminative.accuracy,
                  100.0 * discriminative.precision, 100.0 * discriminative.recall,
                  100.0 * discriminative.f1);
    out << line;
    std::snprintf(line, sizeof(line), "AMBER score %.2f\n", amber);
    out << line;
    return out.str();
}

AmberReport run_eval_amber(const std::filesystem::path& generative_responses,
                           const std::filesystem::path& generative_annotations,
                           const std::filesystem::path& lexicon,
                           const std::filesystem::path& discriminative_responses,
                           const std::filesystem::path& discriminative_annotations,
                           const std::filesystem::path& out_dir) {
    const AmberReport report = eval_amber(
        load_responses(generative_responses), load_amber_annotations(generative_annotations),
        load_lexicon(lexicon), load_responses(discriminative_responses),
        load_labels(discriminative_annotations));
    std::filesystem::create_directories(out_dir);
    write_file(out_dir / "metrics.json", report.to_json().dump(2) + "\n");
    write_file(out_dir / "metrics.txt", report.to_text());
    return report;
}

AblateReport run_ablate(const RunConfig& base, const AblateSpec& spec,
                        const std::optional<std::filesystem::path>& pope_annotations) {
    if (spec.alphas.empty() || spec.lambdas.empty() || spec.schemes.empty()) {
        throw std::invalid_argument("ablation sweep needs at least one alpha, lambda and scheme");
    }
    std::vector<LabelRecord> labels;
    if (pope_annotations.has_value()) labels = load_labels(*pope_annotations);

    AblateReport report;
    for (double alpha : spec.alphas) {
        for (double lambda : spec.lambdas) {
            for (DeactivationScheme scheme : spec.schemes) {
                RunConfig config = base;
                config.decode.method = DecodeMethod::Avisc;
                config.decode.alpha = alpha;
                config.decode.calibration.lambda = lambda;
                config.decode.calibration.scheme = scheme;
                const std::string tag = "alpha" + format_number(alpha) + "_lambda" +
                                        format_number(lambda) + "_" + to_string(scheme);
                config.out_dir = (std::filesystem::path(base.out_dir) / tag).string();
                const RunSummary summary = run_decode(config);

                AblateRow row;
                row.alpha = alpha;
                row.lambda = lambda;
                row.scheme = scheme;
                row.items = summary.items;

                // aggregate the per-step diagnostics of this run
                size_t steps = 0, contrast = 0, calibrated = 0, fallbacks = 0;
                size_t blind_total = 0, allowed_total = 0;
                std::ifstream diag_in(summary.diagnostics_path);
                std::string line;
                while (std::getline(diag_in, line)) {
                    const json record = json::parse(line);
                    for (const json& step : record["steps"]) {
                        ++steps;
                        allowed_total += step["allowed_count"].get<size_t>();
                        if (step["contrast_applied"].get<bool>()) ++contrast;
                        if (step.contains("calibration")) {
                            ++calibrated;
                            const json& cal = step["calibration"];
                            blind_total += cal["blind_indices"].size();
                            if (cal["fallback_used"].get<bool>()) ++fallbacks;
                        }
                    }
                }
                std::ifstream resp_in(summary.responses_path);
                std::string responses_blob((std::istreambuf_iterator<char>(resp_in)),
                                           std::istreambuf_iterator<char>());
                row.responses_digest = fnv1a64(responses_blob.data(), responses_blob.size());

                std::vector<ResponseRecord> run_responses;
                std::istringstream resp_stream(responses_blob);
                while (std::getline(resp_stream, line)) {
                    const json record = json::parse(line);
                    ResponseRecord r;
                    r.id = record["id"].get<std::string>();
                    r.text = record["text"].get<std::string>();
                    run_responses.push_back(std::move(r));
                    const size_t count = record["token_ids"].size();
                    row.total_tokens += count;
                }
                row.contrast_rate = steps ? static_cast<double>(contrast) / steps : 0.0;
                row.fallback_rate =
                    calibrated ? static_cast<double>(fallbacks) / calibrated : 0.0;
                row.mean_blind = calibrated ? static_cast<double>(blind_total) / calibrated : 0.0;
                row.mean_allowed = steps ? static_cast<double>(allowed_total) / steps : 0.0;
                if (!labels.empty()) {
                    row.pope = eval_pope(run_responses, labels).scores;
                }
                report.rows.push_back(std::move(row));
            }
        }
    }
    std::filesystem::create_directories(base.out_dir);
    write_file(std::filesystem::path(base.out_dir) / "ablation.json",
               report.to_json().dump(2) + "\n");
    write_file(std::filesystem::path(base.out_dir) / "ablation.txt", report.to_text());
    return report;
}

json AblateReport::to_json() const {
    json rows_json = json::array();
    for (const AblateRow& row : rows) {
        json r{
            {"alpha", row.alpha},
            {"lambda", row.lambda},
            {"scheme", to_string(row.scheme)},
            {"items", row.items},
            {"total_tokens", row.total_tokens},
            {"contrast_rate", row.contrast_rate},
            {"fallback_rate", row.fallback_rate},
            {"mean_blind", row.mean_blind},
            {"mean_allowed", row.mean_allowed},
            {"responses_digest", hex64(row.responses_digest)},
        };
        if (row.pope.has_value()) {
            r["accuracy"] = row.pope->accuracy;
            r["f1"] = row.pope->f1;
        }
        rows_json.push_back(std::move(r));
    }
    return json{{"rows", rows_json}};
}

std::string AblateReport::to_text() const {
    std::ostringstream out;
    out << "ablation over (alpha, lambda, scheme)\n";
    char line[240];
    for (const AblateRow& row : rows) {
        std::snprintf(line, sizeof(line),
                      "  alpha %-5s lambda %-5s %-6s tokens %5zu  contrast %.3f  fallback %.3f"
                      "  blind/step %.2f  allowed/step %.2f",
                      format_number(row.alpha).c_str(), format_number(row.lambda).c_str(),
                      to_string(row.scheme), row.total_tokens, row.contrast_rate,
                      row.fallback_rate, row.mean_blind, row.mean_allowed);
        out << line;
        if (row.pope.has_value()) {
            std::snprintf(line, sizeof(line), "  acc %.4f  f1 %.4f", row.pope->accuracy,
                          row.pope->f1);
            out << line;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace avisc
