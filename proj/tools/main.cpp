// avisc command line: decode datasets against a backend, score response
// files with the POPE / MME / AMBER metric suites, and sweep calibration
// parameters.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "avisc/runner.hpp"
#include "avisc/version.hpp"

namespace {

using avisc::RunConfig;

struct DecodeFlags {
    std::string dataset;
    std::string out_dir;
    std::string config_file;
    std::string profile = "default";
    std::optional<std::string> method, backend, scheme, strategy;
    std::optional<double> alpha, lambda, gamma, beta;
    std::optional<uint64_t> seed;
    std::optional<size_t> max_tokens, jobs;
    bool freeze_blind = false;
};

void add_decode_flags(CLI::App* cmd, DecodeFlags& flags, bool with_method) {
    cmd->add_option("dataset", flags.dataset, "JSONL decode dataset")->required();
    cmd->add_option("--out", flags.out_dir, "output directory")->required();
    cmd->add_option("--config", flags.config_file, "JSON config file (flags override it)");
    cmd->add_option("--profile", flags.profile, "parameter profile: default (alpha 2.5) or alpha3")
        ->check(CLI::IsMember({"default", "alpha3"}));
    if (with_method) {
        flags.method.emplace();
        cmd->add_option("--method", *flags.method, "base | avisc | vcd")
            ->check(CLI::IsMember({"base", "avisc", "vcd"}));
        flags.alpha.emplace();
        cmd->add_option("--alpha", *flags.alpha, "contrast strength");
        flags.lambda.emplace();
        cmd->add_option("--lambda", *flags.lambda, "blind-token stddev multiplier");
        flags.scheme.emplace();
        cmd->add_option("--scheme", *flags.scheme, "zeros | ones | noise | mask")
            ->check(CLI::IsMember({"zeros", "ones", "noise", "mask"}));
    }
    flags.backend.emplace();
    cmd->add_option("--backend", *flags.backend, "toy or trace:PATH");
    flags.strategy.emplace();
    cmd->add_option("--strategy", *flags.strategy, "greedy | multinomial")
        ->check(CLI::IsMember({"greedy", "multinomial"}));
    flags.gamma.emplace();
    cmd->add_option("--gamma", *flags.gamma, "cumulative layer-attention threshold");
    flags.beta.emplace();
    cmd->add_option("--beta", *flags.beta, "plausibility cutoff");
    flags.seed.emplace();
    cmd->add_option("--seed", *flags.seed, "global seed");
    flags.max_tokens.emplace();
    cmd->add_option("--max-tokens", *flags.max_tokens, "generation cap per item");
    flags.jobs.emplace();
    cmd->add_option("--jobs", *flags.jobs, "parallel worker count");
    cmd->add_flag("--freeze-blind", flags.freeze_blind,
                  "pin the step-0 blind set instead of recomputing per step");
}

RunConfig build_config(const DecodeFlags& flags, const CLI::App* cmd, bool with_method) {
    RunConfig config;
    // profile, then config file, then explicit flags
    config.decode.calibration.gamma = 0.5;
    config.decode.calibration.lambda = 1.0;
    config.decode.beta = 0.1;
    bool alpha_given = false;

    if (!flags.config_file.empty()) {
        std::ifstream in(flags.config_file);
        if (!in) throw std::invalid_argument("cannot open config '" + flags.config_file + "'");
        nlohmann::json doc;
        in >> doc;
        config = RunConfig::from_json(doc, config);
        alpha_given = doc.contains("decode") && doc["decode"].contains("alpha");
    }

    auto set_if = [&](const char* name, auto& dst, const auto& src) {
        if (cmd->count(name) > 0) dst = src;
    };
    if (with_method) {
        if (cmd->count("--method") > 0) config.decode.method = avisc::method_from_string(*flags.method);
        if (cmd->count("--alpha") > 0) {
            config.decode.alpha = *flags.alpha;
            alpha_given = true;
        }
        if (cmd->count("--lambda") > 0) config.decode.calibration.lambda = *flags.lambda;
        if (cmd->count("--scheme") > 0) {
            config.decode.calibration.scheme = avisc::scheme_from_string(*flags.scheme);
        }
    }
    if (!alpha_given) {
        // profile strength for the calibrated method, the reference 1.0
        // for the vcd baseline
        config.decode.alpha = config.decode.method == avisc::DecodeMethod::Vcd
                                  ? 1.0
                                  : (flags.profile == "alpha3" ? 3.0 : 2.5);
    }
    set_if("--backend", config.backend, *flags.backend);
    if (cmd->count("--strategy") > 0) {
        config.decode.strategy = avisc::strategy_from_string(*flags.strategy);
    }
    set_if("--gamma", config.decode.calibration.gamma, *flags.gamma);
    set_if("--beta", config.decode.beta, *flags.beta);
    set_if("--seed", config.seed, *flags.seed);
    set_if("--max-tokens", config.decode.max_tokens, *flags.max_tokens);
    set_if("--jobs", config.jobs, *flags.jobs);
    if (flags.freeze_blind) config.decode.freeze_blind = true;

    config.dataset = flags.dataset;
    config.out_dir = flags.out_dir;
    return config;
}

std::vector<double> parse_number_list(const std::string& csv, const char* what) {
    std::vector<double> values;
    std::stringstream stream(csv);
    std::string part;
    while (std::getline(stream, part, ',')) {
        if (part.empty()) continue;
        try {
            values.push_back(std::stod(part));
        } catch (const std::exception&) {
            throw std::invalid_argument(std::string("bad ") + what + " value '" + part + "'");
        }
    }
    return values;
}

int run_decode_cmd(const DecodeFlags& flags, const CLI::App* cmd) {
    const RunConfig config = build_config(flags, cmd, true);
    const avisc::RunSummary summary = avisc::run_decode(config);
    std::cout << "decoded " << summary.items << " items -> " << summary.responses_path.string()
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attention-calibrated contrastive decoding toolkit"};
    app.set_version_flag("--version", avisc::kVersion);
    app.require_subcommand(1);

    // decode
    auto* decode_cmd = app.add_subcommand("decode", "run generation over a dataset");
    DecodeFlags decode_flags;
    add_decode_flags(decode_cmd, decode_flags, true);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score response files");
    eval_cmd->require_subcommand(1);
    std::string responses, annotations, lexicon, disc_responses, disc_annotations, eval_out;

    auto* pope_cmd = eval_cmd->add_subcommand("pope", "binary object-existence metrics");
    pope_cmd->add_option("--responses", responses, "responses JSONL")->required();
    pope_cmd->add_option("--annotations", annotations, "labels JSONL")->required();
    pope_cmd->add_option("--out", eval_out, "output directory")->required();

    auto* mme_cmd = eval_cmd->add_subcommand("mme", "paired-question category scores");
    mme_cmd->add_option("--responses", responses, "responses JSONL")->required();
    mme_cmd->add_option("--annotations", annotations, "labels JSONL with image_id")->required();
    mme_cmd->add_option("--out", eval_out, "output directory")->required();

    auto* amber_cmd = eval_cmd->add_subcommand("amber", "generative + discriminative suite");
    amber_cmd->add_option("--responses", responses, "generative responses JSONL")->required();
    amber_cmd->add_option("--annotations", annotations, "generative annotations JSONL")
        ->required();
    amber_cmd->add_option("--lexicon", lexicon, "object lexicon JSON")->required();
    amber_cmd->add_option("--disc-responses", disc_responses, "discriminative responses JSONL")
        ->required();
    amber_cmd->add_option("--disc-annotations", disc_annotations,
                          "discriminative labels JSONL")
        ->required();
    amber_cmd->add_option("--out", eval_out, "output directory")->required();

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "sweep alpha x lambda x scheme");
    DecodeFlags ablate_flags;
    add_decode_flags(ablate_cmd, ablate_flags, false);
    std::string alphas_csv, lambdas_csv, schemes_csv, ablate_annotations;
    ablate_cmd->add_option("--alphas", alphas_csv, "comma-separated contrast strengths")
        ->required();
    ablate_cmd->add_option("--lambdas", lambdas_csv, "comma-separated stddev multipliers")
        ->required();
    ablate_cmd->add_option("--schemes", schemes_csv, "comma-separated deactivation schemes")
        ->required();
    ablate_cmd->add_option("--annotations", ablate_annotations,
                           "optional POPE labels scored per sweep row");

    CLI11_PARSE(app, argc, argv);

    try {
        if (decode_cmd->parsed()) {
            return run_decode_cmd(decode_flags, decode_cmd);
        }
        if (pope_cmd->parsed()) {
            const auto report = avisc::run_eval_pope(responses, annotations, eval_out);
            std::cout << report.to_text();
            return 0;
        }
        if (mme_cmd->parsed()) {
            const auto report = avisc::run_eval_mme(responses, annotations, eval_out);
            std::cout << report.to_text();
            return 0;
        }
        if (amber_cmd->parsed()) {
            const auto report = avisc::run_eval_amber(responses, annotations, lexicon,
                                                      disc_responses, disc_annotations, eval_out);
            std::cout << report.to_text();
            return 0;
        }
        if (ablate_cmd->parsed()) {
            RunConfig base = build_config(ablate_flags, ablate_cmd, false);
            avisc::AblateSpec spec;
            spec.alphas = parse_number_list(alphas_csv, "alpha");
            spec.lambdas = parse_number_list(lambdas_csv, "lambda");
            std::stringstream schemes(schemes_csv);
            std::string name;
            while (std::getline(schemes, name, ',')) {
                if (!name.empty()) spec.schemes.push_back(avisc::scheme_from_string(name));
            }
            std::optional<std::filesystem::path> labels;
            if (!ablate_annotations.empty()) labels = ablate_annotations;
            const auto report = avisc::run_ablate(base, spec, labels);
            std::cout << report.to_text();
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
