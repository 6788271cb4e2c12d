#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairlens/backend.hpp"
#include "fairlens/common.hpp"
#include "fairlens/corpus.hpp"
#include "fairlens/report.hpp"
#include "fairlens/scoring.hpp"
#include "fairlens/vision.hpp"

namespace fairlens::pipeline {

constexpr const char* kToolVersion = "0.1.0";

// Appended to every prompt (after ", ") in mitigation-variant runs.
constexpr const char* kDefaultMitigationSuffix =
    "maintain the same gender/race/age as the input image";

// A full run description. Relative paths resolve against the config file's
// directory. Ori and Miti variants of the same config coexist in one
// output_dir because stage artifacts are keyed by the config hash.
struct RunConfig {
    std::filesystem::path seed_manifest;
    std::filesystem::path lexicon;
    std::filesystem::path backend_config;
    std::filesystem::path analyzer_config;
    scoring::Thresholds thresholds;
    vision::ExposureBounds exposure;
    int per_group = 3;
    int concurrency = 1;
    std::uint64_t rng_seed = 0;
    scoring::Variant variant = scoring::Variant::Ori;
    std::string mitigation_suffix = kDefaultMitigationSuffix;
    std::filesystem::path output_dir;

    static RunConfig load(const std::filesystem::path& file);
    void validate() const;

    // Hash over the semantically meaningful fields only: referenced file
    // contents, thresholds, exposure bounds, per_group, rng_seed, variant and
    // (for Miti runs) the suffix. Key order in the config file is irrelevant;
    // concurrency and output_dir do not affect results and are excluded.
    std::string config_hash() const;
    std::string run_id() const { return config_hash(); }
};

struct RunPaths {
    std::filesystem::path run_dir;
    std::filesystem::path prompts_json;
    std::filesystem::path manifest_jsonl;
    std::filesystem::path properties_jsonl;
    std::filesystem::path pairs_jsonl;
    std::filesystem::path words_jsonl;
    std::filesystem::path models_jsonl;
    std::filesystem::path audit_json;
    std::filesystem::path mitigation_json;
    std::filesystem::path run_json;
    std::filesystem::path ablation_dir;
    std::filesystem::path cache_dir;
};

RunPaths run_paths(const RunConfig& config);

// One structured JSON line per event on stderr.
void log_event(const std::string& stage, const std::string& event,
               const nlohmann::json& fields = nlohmann::json::object());

struct StageCounts {
    std::size_t total = 0;
    std::size_t ok = 0;
    std::size_t invalid = 0;
    std::size_t failed = 0;
    std::size_t cache_hits = 0;
};

// Stage entry points. Each validates its input artifacts (raising
// StageDependencyMissing when a prior stage has not run), is idempotent, and
// records completion in run.json.
corpus::PromptList stage_build_prompts(const RunConfig& config);

struct GenerateOptions {
    std::uint64_t limit_new = 0;  // stop after this many new generations (0 = unlimited)
    bool regenerate_invalid = false;
};
StageCounts stage_generate(const RunConfig& config, const GenerateOptions& options = {});

std::size_t stage_assess(const RunConfig& config);

struct ScoreSummary {
    std::size_t generated = 0;
    std::size_t scored = 0;
    nlohmann::json exclusions;
};
ScoreSummary stage_score(const RunConfig& config);

report::ReportBundle stage_report(const RunConfig& config);

// Rescoring grid; writes pairs/words/models per (age, race) threshold combo
// under <run>/ablation/age<A>_race<R>/.
std::vector<std::filesystem::path> stage_ablate(const RunConfig& config,
                                                const std::vector<double>& age_thresholds,
                                                const std::vector<double>& race_thresholds);

// Joins the Ori and Miti runs of this config over the Table-4-shaped key
// selection (top +/- profession word per attribute from the Ori run).
scoring::MitigationComparison stage_mitigate_compare(const RunConfig& config);

// Helpers shared by stages, tests and the CLI.
nlohmann::json load_backend_config(const RunConfig& config);
std::string backend_model_id(const nlohmann::json& backend_config);
std::vector<scoring::PairDelta> read_pairs(const std::filesystem::path& path);
std::vector<scoring::WordBiasScore> read_words(const std::filesystem::path& path);
void write_score_set(const std::filesystem::path& dir,
                     const std::vector<scoring::PairDelta>& pairs);

}  // namespace fairlens::pipeline
