#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fairlens/fixture.hpp"
#include "fairlens/pipeline.hpp"

namespace {

using namespace fairlens;

int exit_code_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::ConfigInvalid:
            return 2;
        case ErrorCode::StageDependencyMissing:
            return 3;
        case ErrorCode::BackendTimeout:
        case ErrorCode::BackendRejected:
        case ErrorCode::SafetyRefusal:
        case ErrorCode::CacheCorruption:
        case ErrorCode::AnalyzerUnavailable:
        case ErrorCode::AnalyzerMalformedResponse:
            return 4;
        case ErrorCode::ExcessiveFailureRate:
            return 5;
        default:
            return 1;
    }
}

struct CommonArgs {
    std::string config_path;
    double thresholds_age = -1.0;
    double thresholds_race = -1.0;
    std::string variant;
    long long rng_seed = -1;
    int concurrency = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Run config JSON")->required();
    cmd->add_option("--thresholds-age", args.thresholds_age, "Age threshold override (years)");
    cmd->add_option("--thresholds-race", args.thresholds_race,
                    "Skin-gray threshold override (gray units)");
    cmd->add_option("--variant", args.variant, "Variant override: ori or miti");
    cmd->add_option("--rng-seed", args.rng_seed, "RNG seed override");
    cmd->add_option("--concurrency", args.concurrency, "Concurrency override");
}

pipeline::RunConfig load_config(const CommonArgs& args) {
    auto config = pipeline::RunConfig::load(args.config_path);
    if (args.thresholds_age > 0) config.thresholds.age = args.thresholds_age;
    if (args.thresholds_race > 0) config.thresholds.race = args.thresholds_race;
    if (!args.variant.empty()) config.variant = scoring::parse_variant(args.variant);
    if (args.rng_seed >= 0) config.rng_seed = static_cast<std::uint64_t>(args.rng_seed);
    if (args.concurrency > 0) config.concurrency = args.concurrency;
    config.validate();
    return config;
}

std::vector<double> parse_threshold_list(const std::string& text, const char* label) {
    std::vector<double> values;
    std::string cur;
    auto flush = [&]() {
        if (cur.empty()) return;
        values.push_back(std::stod(cur));
        cur.clear();
    };
    for (char c : text) {
        if (c == ',') flush();
        else cur += c;
    }
    flush();
    if (values.empty()) {
        raise(ErrorCode::ConfigInvalid, std::string(label) + " list is empty");
    }
    for (double v : values) {
        if (v <= 0) raise(ErrorCode::ConfigInvalid, std::string(label) + " must be positive");
    }
    return values;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fairlens: metamorphic bias evaluation for image-editing models"};
    app.require_subcommand(1);

    // sample-seeds (standalone: corpus index -> balanced seed manifest)
    std::string index_path, sample_out;
    int sample_per_group = 3;
    std::uint64_t sample_seed = 0;
    auto* sample_cmd =
        app.add_subcommand("sample-seeds", "Stratified seed sampling from a corpus index");
    sample_cmd->add_option("--corpus-index", index_path, "Corpus index CSV")->required();
    sample_cmd->add_option("--per-group", sample_per_group, "Seeds per demographic group");
    sample_cmd->add_option("--rng-seed", sample_seed, "Sampling RNG seed");
    sample_cmd->add_option("--out", sample_out, "Output manifest path")->required();

    CommonArgs prompts_args, generate_args, assess_args, score_args, report_args, ablate_args,
        mitigate_args;

    auto* prompts_cmd = app.add_subcommand("build-prompts", "Filter lexicon and render prompts");
    add_common(prompts_cmd, prompts_args);

    auto* generate_cmd = app.add_subcommand("generate", "Run the seed x prompt generation matrix");
    add_common(generate_cmd, generate_args);
    std::uint64_t generate_limit = 0;
    bool regenerate_invalid = false;
    generate_cmd->add_option("--limit", generate_limit,
                             "Stop after this many new generations (resume later)");
    generate_cmd->add_flag("--regenerate-invalid", regenerate_invalid,
                           "Regenerate images whose assessed properties are invalid");

    auto* assess_cmd = app.add_subcommand("assess", "Assess gender/age/skin-gray per image");
    add_common(assess_cmd, assess_args);

    auto* score_cmd = app.add_subcommand("score", "Compute pair, word and model bias scores");
    add_common(score_cmd, score_args);

    auto* report_cmd = app.add_subcommand("report", "Emit CSV tables, SVG figures and the audit");
    add_common(report_cmd, report_args);

    auto* ablate_cmd = app.add_subcommand("ablate", "Rescore a finished run on a threshold grid");
    add_common(ablate_cmd, ablate_args);
    std::string ablate_ages = "15,25,35";
    std::string ablate_races = "10,20,30";
    ablate_cmd->add_option("--age-thresholds", ablate_ages, "Comma-separated age thresholds");
    ablate_cmd->add_option("--race-thresholds", ablate_races, "Comma-separated race thresholds");

    auto* mitigate_cmd =
        app.add_subcommand("mitigate-compare", "Compare Ori and Miti word scores (top words)");
    add_common(mitigate_cmd, mitigate_args);

    std::string fixture_out;
    int fixture_per_group = 1;
    bool fixture_full = false;
    auto* fixture_cmd =
        app.add_subcommand("fixture", "Write a synthetic demo workspace (seeds, lexicon, configs)");
    fixture_cmd->add_option("--out", fixture_out, "Workspace directory")->required();
    fixture_cmd->add_option("--per-group", fixture_per_group, "Seeds per demographic group");
    fixture_cmd->add_flag("--full", fixture_full, "Use the full reference lexicon");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sample_cmd->parsed()) {
            auto index = corpus::load_corpus_index(index_path);
            auto set = corpus::sample_seed_set(index, sample_per_group, sample_seed);
            corpus::write_seed_manifest(set, sample_out);
            std::printf("wrote %zu seeds to %s\n", set.seeds.size(), sample_out.c_str());
        } else if (prompts_cmd->parsed()) {
            auto config = load_config(prompts_args);
            auto prompts = pipeline::stage_build_prompts(config);
            std::printf("built %zu prompts (run %s)\n", prompts.size(),
                        config.run_id().c_str());
        } else if (generate_cmd->parsed()) {
            auto config = load_config(generate_args);
            pipeline::GenerateOptions options;
            options.limit_new = generate_limit;
            options.regenerate_invalid = regenerate_invalid;
            auto counts = pipeline::stage_generate(config, options);
            std::printf("generated %zu records: %zu ok, %zu invalid, %zu failed, %zu cached\n",
                        counts.total, counts.ok, counts.invalid, counts.failed,
                        counts.cache_hits);
        } else if (assess_cmd->parsed()) {
            auto config = load_config(assess_args);
            std::size_t n = pipeline::stage_assess(config);
            std::printf("assessed %zu images\n", n);
        } else if (score_cmd->parsed()) {
            auto config = load_config(score_args);
            auto summary = pipeline::stage_score(config);
            std::printf("scored %zu of %zu pairs\n", summary.scored, summary.generated);
        } else if (report_cmd->parsed()) {
            auto config = load_config(report_args);
            auto bundle = pipeline::stage_report(config);
            std::printf("report bundle %s: %zu tables, %zu figures\n", bundle.run_id.c_str(),
                        bundle.tables.size(), bundle.figures.size());
        } else if (ablate_cmd->parsed()) {
            auto config = load_config(ablate_args);
            auto dirs = pipeline::stage_ablate(config, parse_threshold_list(ablate_ages, "age"),
                                               parse_threshold_list(ablate_races, "race"));
            std::printf("rescored %zu threshold combinations\n", dirs.size());
        } else if (mitigate_cmd->parsed()) {
            auto config = load_config(mitigate_args);
            auto cmp = pipeline::stage_mitigate_compare(config);
            for (const auto& s : cmp.summaries) {
                std::printf("%s: score ori %s, miti %s\n", s.model_id.c_str(),
                            format_2dp(s.score_ori).c_str(), format_2dp(s.score_miti).c_str());
            }
        } else if (fixture_cmd->parsed()) {
            fixture::WorkspaceOptions options;
            options.dir = fixture_out;
            options.per_group = fixture_per_group;
            if (fixture_full) {
                options.lexicon_source = std::filesystem::path(FAIRLENS_DATA_DIR) / "lexicon.csv";
            }
            auto info = fixture::write_fixture_workspace(options);
            std::printf("fixture workspace at %s (%zu seeds); run config: %s\n",
                        fixture_out.c_str(), info.seed_count, info.run_config.string().c_str());
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
