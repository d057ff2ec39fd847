// Python bindings for the main pipeline operations: the calibration
// pipeline, contrastive decoding, the toy backend, traces and the metric
// suite.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "avisc/calibration.hpp"
#include "avisc/decoding.hpp"
#include "avisc/metrics.hpp"
#include "avisc/runner.hpp"
#include "avisc/toy_model.hpp"
#include "avisc/trace.hpp"
#include "avisc/types.hpp"
#include "avisc/version.hpp"

namespace py = pybind11;
using namespace avisc;

namespace {

VisualTokenSet visual_from_array(const py::array_t<double, py::array::c_style>& rows) {
    if (rows.ndim() != 2) throw std::invalid_argument("visual tokens must be a 2-d array");
    VisualTokenSet v(static_cast<size_t>(rows.shape(0)), static_cast<size_t>(rows.shape(1)));
    std::copy(rows.data(), rows.data() + rows.size(), v.data().begin());
    v.validate();
    return v;
}

py::array_t<double> visual_to_array(const VisualTokenSet& v) {
    py::array_t<double> out({v.count(), v.dim()});
    std::copy(v.data().begin(), v.data().end(), out.mutable_data());
    return out;
}

AttentionSnapshot snapshot_from_array(const py::array_t<double, py::array::c_style>& weights,
                                      size_t image_tokens, size_t query_position) {
    if (weights.ndim() != 3) {
        throw std::invalid_argument("attention weights must be a (layers, heads, keys) array");
    }
    AttentionSnapshot snap(static_cast<size_t>(weights.shape(0)),
                           static_cast<size_t>(weights.shape(1)),
                           static_cast<size_t>(weights.shape(2)), image_tokens);
    snap.query_position = query_position;
    std::copy(weights.data(), weights.data() + weights.size(), snap.weights.begin());
    return snap;
}

py::dict report_to_dict(const CalibrationReport& report) {
    py::dict d;
    d["layer_proportions"] = report.layer_proportions;
    d["selected_layers"] = report.selected_layers;
    d["image_profile"] = report.image_profile;
    d["mean"] = report.mean;
    d["stddev"] = report.stddev;
    d["blind_indices"] = report.blind_indices;
    d["fallback_used"] = report.fallback_used;
    d["degenerate_attention"] = report.degenerate_attention;
    return d;
}

py::dict step_to_dict(const StepDiagnostics& step) {
    py::dict d;
    d["step"] = step.step;
    d["base_logits_digest"] = step.base_logits_digest;
    d["contrast_applied"] = step.contrast_applied;
    d["allowed_count"] = step.allowed_count;
    d["chosen_token"] = step.chosen_token;
    if (step.calibration.has_value()) d["calibration"] = report_to_dict(*step.calibration);
    return d;
}

DecodeParams params_from_kwargs(const std::string& method, const std::string& strategy,
                                double alpha, double beta, size_t max_tokens, uint64_t seed,
                                bool freeze_blind, double gamma, double lambda,
                                const std::string& scheme, uint64_t noise_seed) {
    DecodeParams params;
    params.method = method_from_string(method);
    params.strategy = strategy_from_string(strategy);
    params.alpha = alpha;
    params.beta = beta;
    params.max_tokens = max_tokens;
    params.rng_seed = seed;
    params.freeze_blind = freeze_blind;
    params.calibration.gamma = gamma;
    params.calibration.lambda = lambda;
    params.calibration.scheme = scheme_from_string(scheme);
    params.calibration.noise_seed = noise_seed;
    return params;
}

}  // namespace

PYBIND11_MODULE(_avisc, m) {
    m.doc() = "attention-calibrated contrastive decoding";
    m.attr("__version__") = kVersion;

    // ---- core ----
    m.def(
        "softmax",
        [](const std::vector<double>& logits) {
            return softmax(LogitVector{logits}).probs;
        },
        py::arg("logits"), "Numerically stabilized softmax.");

    m.def(
        "validate_snapshot",
        [](const py::array_t<double, py::array::c_style>& weights, size_t image_tokens) {
            const auto result = validate_snapshot(snapshot_from_array(weights, image_tokens, 0));
            return py::make_tuple(result.ok, result.message);
        },
        py::arg("weights"), py::arg("image_tokens"),
        "Check snapshot invariants; returns (ok, message).");

    // ---- calibration ----
    m.def(
        "layer_attention_proportions",
        [](const py::array_t<double, py::array::c_style>& weights, size_t image_tokens) {
            return layer_attention_proportions(snapshot_from_array(weights, image_tokens, 0));
        },
        py::arg("weights"), py::arg("image_tokens"));

    m.def("select_layers", &select_layers, py::arg("proportions"), py::arg("gamma"));

    m.def(
        "image_attention_profile",
        [](const py::array_t<double, py::array::c_style>& weights, size_t image_tokens,
           const std::vector<size_t>& selected) {
            return image_attention_profile(snapshot_from_array(weights, image_tokens, 0),
                                           selected);
        },
        py::arg("weights"), py::arg("image_tokens"), py::arg("selected"));

    m.def(
        "identify_blind_tokens",
        [](const std::vector<double>& profile, double lambda) {
            const auto result = identify_blind_tokens(profile, lambda);
            return py::make_tuple(result.indices, result.mean, result.stddev);
        },
        py::arg("profile"), py::arg("lambda_"),
        "Returns (blind_indices, mean, population stddev).");

    m.def(
        "build_biased_visual",
        [](const py::array_t<double, py::array::c_style>& visual,
           const std::vector<size_t>& blind, const std::string& scheme, uint64_t noise_seed,
           size_t step_index) {
            CalibrationParams params;
            params.scheme = scheme_from_string(scheme);
            params.noise_seed = noise_seed;
            const VisualTokenSet out =
                build_biased_visual(visual_from_array(visual), blind, params, step_index);
            std::vector<bool> excluded(out.count());
            for (size_t j = 0; j < out.count(); ++j) excluded[j] = out.excluded(j);
            return py::make_tuple(visual_to_array(out), excluded);
        },
        py::arg("visual"), py::arg("blind"), py::arg("scheme") = "zeros",
        py::arg("noise_seed") = 0, py::arg("step_index") = 0,
        "Returns (biased rows, excluded flags).");

    m.def(
        "calibrate",
        [](const py::array_t<double, py::array::c_style>& weights, size_t image_tokens,
           const py::array_t<double, py::array::c_style>& visual, double gamma, double lambda,
           const std::string& scheme, uint64_t noise_seed, size_t step_index) {
            CalibrationParams params;
            params.gamma = gamma;
            params.lambda = lambda;
            params.scheme = scheme_from_string(scheme);
            params.noise_seed = noise_seed;
            auto [v_star, report] = calibrate(snapshot_from_array(weights, image_tokens, 0),
                                              visual_from_array(visual), params, step_index);
            return py::make_tuple(visual_to_array(v_star), report_to_dict(report));
        },
        py::arg("weights"), py::arg("image_tokens"), py::arg("visual"), py::arg("gamma") = 0.5,
        py::arg("lambda_") = 1.0, py::arg("scheme") = "zeros", py::arg("noise_seed") = 0,
        py::arg("step_index") = 0, "Full calibration pipeline; returns (biased visual, report).");

    // ---- decoding ----
    m.def(
        "contrast_logits",
        [](const std::vector<double>& original, const std::vector<double>& biased, double alpha) {
            return contrast_logits(LogitVector{original}, LogitVector{biased}, alpha).values;
        },
        py::arg("original"), py::arg("biased"), py::arg("alpha"));

    m.def(
        "plausibility_mask",
        [](const std::vector<double>& probs, double beta) {
            Distribution dist;
            dist.probs = probs;
            dist.validate();
            return plausibility_mask(dist, beta);
        },
        py::arg("probs"), py::arg("beta"));

    py::class_<ToyLVLMConfig>(m, "ToyConfig")
        .def(py::init([](size_t vocab_size, size_t embed_dim, size_t layers, size_t heads,
                         size_t image_tokens, size_t max_context, uint64_t weight_seed) {
                 ToyLVLMConfig cfg{vocab_size, embed_dim, layers, heads, image_tokens,
                                   max_context, weight_seed};
                 cfg.validate();
                 return cfg;
             }),
             py::arg("vocab_size") = 32, py::arg("embed_dim") = 16, py::arg("layers") = 4,
             py::arg("heads") = 2, py::arg("image_tokens") = 8, py::arg("max_context") = 160,
             py::arg("weight_seed") = 0x5eed)
        .def_readonly("vocab_size", &ToyLVLMConfig::vocab_size)
        .def_readonly("embed_dim", &ToyLVLMConfig::embed_dim)
        .def_readonly("layers", &ToyLVLMConfig::layers)
        .def_readonly("heads", &ToyLVLMConfig::heads)
        .def_readonly("image_tokens", &ToyLVLMConfig::image_tokens);

    m.def(
        "decode_toy",
        [](const ToyLVLMConfig& config, const py::array_t<double, py::array::c_style>& visual,
           const std::vector<TokenId>& query_ids, const std::string& method,
           const std::string& strategy, double alpha, double beta, size_t max_tokens,
           uint64_t seed, bool freeze_blind, double gamma, double lambda,
           const std::string& scheme, uint64_t noise_seed) {
            ToyBackend backend(config);
            const DecodeParams params =
                params_from_kwargs(method, strategy, alpha, beta, max_tokens, seed, freeze_blind,
                                   gamma, lambda, scheme, noise_seed);
            QueryTokens q;
            q.ids = query_ids;
            const DecodeResult result = decode(backend, visual_from_array(visual), q, params);
            py::list steps;
            for (const auto& step : result.steps) steps.append(step_to_dict(step));
            std::string text;
            for (size_t i = 0; i < result.tokens.size(); ++i) {
                if (i > 0) text += ' ';
                text += backend.word_for_token(result.tokens[i]);
            }
            py::dict out;
            out["tokens"] = result.tokens;
            out["text"] = text;
            out["hit_eos"] = result.hit_eos;
            out["steps"] = steps;
            return out;
        },
        py::arg("config"), py::arg("visual"), py::arg("query_ids"), py::arg("method") = "base",
        py::arg("strategy") = "greedy", py::arg("alpha") = 2.5, py::arg("beta") = 0.1,
        py::arg("max_tokens") = 64, py::arg("seed") = 0, py::arg("freeze_blind") = false,
        py::arg("gamma") = 0.5, py::arg("lambda_") = 1.0, py::arg("scheme") = "zeros",
        py::arg("noise_seed") = 0, "Run one decode against the deterministic toy backend.");

    m.def(
        "record_toy_trace",
        [](const ToyLVLMConfig& config, const py::array_t<double, py::array::c_style>& visual,
           const std::vector<TokenId>& query_ids, const std::filesystem::path& path,
           const std::string& method, const std::string& strategy, double alpha, double beta,
           size_t max_tokens, uint64_t seed) {
            ToyBackend backend(config);
            const DecodeParams params = params_from_kwargs(method, strategy, alpha, beta,
                                                           max_tokens, seed, false, 0.5, 1.0,
                                                           "zeros", 0);
            QueryTokens q;
            q.ids = query_ids;
            const TraceFile trace = record_trace(backend, visual_from_array(visual), q, params);
            trace_write(trace, path);
            return trace.steps.size();
        },
        py::arg("config"), py::arg("visual"), py::arg("query_ids"), py::arg("path"),
        py::arg("method") = "base", py::arg("strategy") = "greedy", py::arg("alpha") = 2.5,
        py::arg("beta") = 0.1, py::arg("max_tokens") = 64, py::arg("seed") = 0,
        "Capture a toy decode into a trace file; returns the recorded step count.");

    m.def(
        "trace_info",
        [](const std::filesystem::path& path) {
            const TraceFile trace = trace_load(path);
            py::dict d;
            d["model_name"] = trace.header.model_name;
            d["vocab_size"] = trace.header.vocab_size;
            d["image_tokens"] = trace.header.image_tokens;
            d["layers"] = trace.header.layers;
            d["heads"] = trace.header.heads;
            d["has_biased_logits"] = trace.header.has_biased_logits;
            d["steps"] = trace.steps.size();
            py::list chosen;
            for (const auto& s : trace.steps) chosen.append(s.chosen_token);
            d["chosen_tokens"] = chosen;
            return d;
        },
        py::arg("path"), "Header and chosen-token summary of a trace file.");

    // ---- metrics ----
    m.def(
        "parse_yes_no",
        [](const std::string& text) { return std::string(to_string(parse_yes_no(text))); },
        py::arg("text"));

    m.def(
        "pope_scores",
        [](const std::vector<std::pair<std::string, std::string>>& outcomes) {
            std::vector<BinaryOutcome> parsed;
            parsed.reserve(outcomes.size());
            auto to_yes_no = [](const std::string& s) {
                if (s == "yes") return YesNo::Yes;
                if (s == "no") return YesNo::No;
                return YesNo::Unparsed;
            };
            for (const auto& [prediction, label] : outcomes) {
                parsed.push_back(BinaryOutcome{to_yes_no(prediction), to_yes_no(label)});
            }
            const PopeScores s = pope_scores(parsed);
            py::dict d;
            d["accuracy"] = s.accuracy;
            d["precision"] = s.precision;
            d["recall"] = s.recall;
            d["f1"] = s.f1;
            d["zero_division"] = s.zero_division;
            d["unparsed"] = s.unparsed;
            return d;
        },
        py::arg("outcomes"), "Score (prediction, label) pairs; yes is the positive class.");

    m.def(
        "chair",
        [](const std::set<std::string>& response, const std::set<std::string>& truth) {
            return chair(response, truth);
        },
        py::arg("response"), py::arg("truth"));
    m.def(
        "cover",
        [](const std::set<std::string>& response, const std::set<std::string>& truth) {
            return cover(response, truth);
        },
        py::arg("response"), py::arg("truth"));
    m.def("hal", &hal, py::arg("chair_value"));
    m.def(
        "cog",
        [](const std::set<std::string>& response, const std::set<std::string>& targets) {
            return cog(response, targets);
        },
        py::arg("response"), py::arg("targets"));
    m.def("amber_score", &amber_score, py::arg("chair_pct"), py::arg("f1_pct"));

    m.def(
        "extract_objects",
        [](const std::string& text,
           const std::map<std::string, std::vector<std::string>>& lexicon) {
            ObjectLexicon lex;
            for (const auto& [canonical, synonyms] : lexicon) lex.add(canonical, synonyms);
            return extract_objects(text, lex);
        },
        py::arg("text"), py::arg("lexicon"),
        "Word-boundary object extraction; lexicon maps canonical -> synonyms.");
}
