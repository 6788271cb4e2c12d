#include "fairlens/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <unistd.h>

namespace fairlens::pipeline {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base_dir, const std::string& value) {
    fs::path p(value);
    if (p.is_absolute() || base_dir.empty()) return p;
    return base_dir / p;
}

std::string file_content_hash(const fs::path& path) {
    return to_hex16(fnv1a64(read_text_file(path)));
}

std::string canonical_json_of_file(const fs::path& path) {
    return nlohmann::json::parse(read_text_file(path)).dump();
}

void mark_stage_complete(const RunConfig& config, const std::string& stage,
                         const nlohmann::json& stats) {
    auto paths = run_paths(config);
    nlohmann::json run_doc;
    if (fs::exists(paths.run_json)) {
        run_doc = nlohmann::json::parse(read_text_file(paths.run_json));
    }
    run_doc["config_hash"] = config.config_hash();
    run_doc["tool_version"] = kToolVersion;
    run_doc["variant"] = std::string(scoring::to_string(config.variant));
    run_doc["stages"][stage] = stats;
    run_doc["stages"][stage]["completed_at"] = iso8601_utc_now();
    atomic_write_file(paths.run_json, run_doc.dump(2) + "\n");
}

void require_artifact(const fs::path& path, const std::string& producer) {
    if (!fs::exists(path)) {
        raise(ErrorCode::StageDependencyMissing,
              path.string() + " not found; run '" + producer + "' first");
    }
}

}  // namespace

RunConfig RunConfig::load(const fs::path& file) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text_file(file));
    } catch (const Error&) {
        raise(ErrorCode::ConfigInvalid, "cannot read config " + file.string());
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::ConfigInvalid, file.string() + ": " + e.what());
    }
    fs::path base = file.parent_path();
    RunConfig config;
    try {
        config.seed_manifest = resolve(base, doc.at("seed_manifest").get<std::string>());
        config.lexicon = resolve(base, doc.at("lexicon").get<std::string>());
        config.backend_config = resolve(base, doc.at("backend_config").get<std::string>());
        config.analyzer_config = resolve(base, doc.at("analyzer_config").get<std::string>());
        config.output_dir = resolve(base, doc.at("output_dir").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::ConfigInvalid, file.string() + ": " + e.what());
    }
    if (doc.contains("thresholds")) {
        config.thresholds.age = doc["thresholds"].value("age", 25.0);
        config.thresholds.race = doc["thresholds"].value("race", 20.0);
    }
    if (doc.contains("exposure")) {
        config.exposure.v_min = doc["exposure"].value("v_min", 0.10);
        config.exposure.v_max = doc["exposure"].value("v_max", 0.95);
    }
    config.per_group = doc.value("per_group", 3);
    config.concurrency = doc.value("concurrency", 1);
    config.rng_seed = doc.value("rng_seed", 0ull);
    config.variant = scoring::parse_variant(doc.value("variant", "ori"));
    config.mitigation_suffix = doc.value("mitigation_suffix", std::string(kDefaultMitigationSuffix));
    return config;
}

void RunConfig::validate() const {
    for (const auto& [label, path] :
         {std::pair<const char*, const fs::path*>{"seed_manifest", &seed_manifest},
          {"lexicon", &lexicon},
          {"backend_config", &backend_config},
          {"analyzer_config", &analyzer_config}}) {
        if (!fs::exists(*path)) {
            raise(ErrorCode::ConfigInvalid,
                  std::string(label) + " does not exist: " + path->string());
        }
    }
    try {
        thresholds.validate();
        exposure.validate();
    } catch (const Error& e) {
        raise(ErrorCode::ConfigInvalid, e.what());
    }
    if (per_group <= 0) raise(ErrorCode::ConfigInvalid, "per_group must be positive");
    if (concurrency <= 0) raise(ErrorCode::ConfigInvalid, "concurrency must be positive");
    if (variant == scoring::Variant::Miti && trim(mitigation_suffix).empty()) {
        raise(ErrorCode::ConfigInvalid, "variant=miti requires a non-empty mitigation_suffix");
    }
}

std::string RunConfig::config_hash() const {
    validate();
    nlohmann::json semantic = {
        {"seed_manifest", file_content_hash(seed_manifest)},
        {"lexicon", file_content_hash(lexicon)},
        {"backend", canonical_json_of_file(backend_config)},
        {"analyzer", canonical_json_of_file(analyzer_config)},
        {"thresholds", {{"age", thresholds.age}, {"race", thresholds.race}}},
        {"exposure", {{"v_min", exposure.v_min}, {"v_max", exposure.v_max}}},
        {"per_group", per_group},
        {"rng_seed", rng_seed},
        {"variant", std::string(scoring::to_string(variant))},
        {"mitigation_suffix",
         variant == scoring::Variant::Miti ? mitigation_suffix : std::string()},
    };
    return to_hex16(fnv1a64(semantic.dump()));
}

RunPaths run_paths(const RunConfig& config) {
    RunPaths paths;
    paths.run_dir = config.output_dir / "runs" / config.run_id();
    paths.prompts_json = paths.run_dir / "prompts.json";
    paths.manifest_jsonl = paths.run_dir / "manifest.jsonl";
    paths.properties_jsonl = paths.run_dir / "properties.jsonl";
    paths.pairs_jsonl = paths.run_dir / "pairs.jsonl";
    paths.words_jsonl = paths.run_dir / "words.jsonl";
    paths.models_jsonl = paths.run_dir / "models.jsonl";
    paths.audit_json = paths.run_dir / "audit.json";
    paths.mitigation_json = paths.run_dir / "mitigation.json";
    paths.run_json = paths.run_dir / "run.json";
    paths.ablation_dir = paths.run_dir / "ablation";
    paths.cache_dir = config.output_dir / "cache";
    return paths;
}

void log_event(const std::string& stage, const std::string& event,
               const nlohmann::json& fields) {
    nlohmann::json line = fields;
    line["ts"] = iso8601_utc_now();
    line["stage"] = stage;
    line["event"] = event;
    std::fprintf(stderr, "%s\n", line.dump().c_str());
}

corpus::PromptList stage_build_prompts(const RunConfig& config) {
    config.validate();
    auto paths = run_paths(config);
    auto entries = corpus::load_lexicon(config.lexicon);
    auto filtered = corpus::filter_lexicon(entries);
    auto prompts = corpus::build_prompt_list(filtered);
    atomic_write_file(paths.prompts_json, corpus::prompt_list_to_json(prompts).dump(2) + "\n");

    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [domain, count] : prompts.domain_counts) {
        counts[std::string(corpus::to_string(domain))] = count;
    }
    mark_stage_complete(config, "build_prompts",
                        {{"raw_entries", entries.size()},
                         {"retained", filtered.size()},
                         {"prompts", prompts.size()},
                         {"domain_counts", counts}});
    log_event("build_prompts", "done", {{"prompts", prompts.size()}});
    return prompts;
}

StageCounts stage_generate(const RunConfig& config, const GenerateOptions& options) {
    config.validate();
    auto paths = run_paths(config);
    require_artifact(paths.prompts_json, "build-prompts");

    auto prompts = corpus::prompt_list_from_json(
        nlohmann::json::parse(read_text_file(paths.prompts_json)));
    auto seeds = corpus::load_seed_manifest(config.seed_manifest);
    auto backend_cfg = load_backend_config(config);
    auto backend_handle = backend::make_backend(backend_cfg, config.rng_seed);
    std::string model_id = backend_model_id(backend_cfg);

    backend::Generator generator(paths.cache_dir, backend_handle);
    backend::RunMatrixOptions run_options;
    run_options.concurrency = config.concurrency;
    run_options.failure_ceiling = backend_cfg.value("failure_ceiling", 0.25);
    run_options.failure_min_sample = backend_cfg.value("failure_min_sample", 10);
    run_options.stop_after_new = options.limit_new;
    run_options.manifest_path = paths.manifest_jsonl;
    run_options.max_attempts = backend_cfg.value("max_attempts", backend::kDefaultMaxAttempts);

    std::shared_ptr<vision::FaceAnalyzer> analyzer;
    if (options.regenerate_invalid || backend_cfg.value("regenerate_on_invalid", false)) {
        analyzer = std::shared_ptr<vision::FaceAnalyzer>(
            vision::make_analyzer(nlohmann::json::parse(read_text_file(config.analyzer_config))));
        vision::ExposureBounds bounds = config.exposure;
        std::shared_ptr<std::mutex> analyzer_mutex = std::make_shared<std::mutex>();
        run_options.assess = [analyzer, bounds, analyzer_mutex](const fs::path& image_path) {
            std::lock_guard<std::mutex> lock(*analyzer_mutex);
            Image image = load_png(image_path);
            return vision::assess_properties(image_path, image, *analyzer, bounds);
        };
        run_options.validity = [](const vision::ImageProperties& props) { return props.valid; };
    }

    bool tty = isatty(fileno(stderr)) != 0;
    if (tty) {
        run_options.progress = [](std::size_t done, std::size_t total) {
            std::fprintf(stderr, "\r[generate] %zu/%zu", done, total);
            if (done == total) std::fprintf(stderr, "\n");
        };
    }

    std::optional<std::string> suffix;
    if (config.variant == scoring::Variant::Miti) {
        suffix = config.mitigation_suffix;
    }

    auto params = backend_cfg.value("params", nlohmann::json::object());
    auto records = backend::run_matrix(generator, seeds, prompts, params, suffix, model_id,
                                       run_options);

    StageCounts counts;
    counts.total = records.size();
    for (const auto& rec : records) {
        switch (rec.status) {
            case backend::GenStatus::Ok: ++counts.ok; break;
            case backend::GenStatus::Invalid: ++counts.invalid; break;
            case backend::GenStatus::Failed: ++counts.failed; break;
        }
        if (rec.cache_hit) ++counts.cache_hits;
    }
    mark_stage_complete(config, "generate",
                        {{"attempted", counts.total},
                         {"ok", counts.ok},
                         {"invalid", counts.invalid},
                         {"failed", counts.failed},
                         {"cache_hits", counts.cache_hits},
                         {"matrix", seeds.seeds.size() * prompts.size()}});
    log_event("generate", "done",
              {{"attempted", counts.total}, {"ok", counts.ok}, {"failed", counts.failed}});
    return counts;
}

namespace {

// Keep the last record per (seed, prompt): manifests are append-only, so a
// rerun may log the same pair again.
std::vector<backend::GenerationRecord> dedup_manifest(const fs::path& manifest_path) {
    std::map<std::pair<std::string, std::string>, backend::GenerationRecord> latest;
    for (const auto& row : read_jsonl(manifest_path)) {
        auto rec = backend::GenerationRecord::from_json(row);
        latest[{rec.seed_id, rec.prompt_id}] = rec;
    }
    std::vector<backend::GenerationRecord> out;
    out.reserve(latest.size());
    for (auto& [key, rec] : latest) out.push_back(std::move(rec));
    return out;
}

}  // namespace

std::size_t stage_assess(const RunConfig& config) {
    config.validate();
    auto paths = run_paths(config);
    require_artifact(paths.manifest_jsonl, "generate");

    auto records = dedup_manifest(paths.manifest_jsonl);
    auto seeds = corpus::load_seed_manifest(config.seed_manifest);

    std::vector<fs::path> targets;
    for (const auto& seed : seeds.seeds) targets.push_back(seed.image_path);
    for (const auto& rec : records) {
        if (rec.status == backend::GenStatus::Ok) targets.push_back(rec.image_path);
    }
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());

    auto analyzer = vision::make_analyzer(
        nlohmann::json::parse(read_text_file(config.analyzer_config)));

    std::vector<nlohmann::json> rows(targets.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= targets.size()) return;
            {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (first_error) return;
            }
            try {
                Image image = load_png(targets[i]);
                auto props = vision::assess_properties(targets[i], image, *analyzer,
                                                       config.exposure);
                nlohmann::json row = props.to_json();
                row["image"] = targets[i].generic_string();
                rows[i] = std::move(row);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < std::max(1, config.concurrency); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);

    std::string body;
    for (const auto& row : rows) body += row.dump() + "\n";
    atomic_write_file(paths.properties_jsonl, body);

    mark_stage_complete(config, "assess", {{"images", targets.size()}});
    log_event("assess", "done", {{"images", targets.size()}});
    return targets.size();
}

ScoreSummary stage_score(const RunConfig& config) {
    config.validate();
    auto paths = run_paths(config);
    require_artifact(paths.manifest_jsonl, "generate");
    require_artifact(paths.properties_jsonl, "assess");

    std::map<std::string, vision::ImageProperties> props_by_image;
    for (const auto& row : read_jsonl(paths.properties_jsonl)) {
        props_by_image[row.at("image").get<std::string>()] =
            vision::ImageProperties::from_json(row);
    }
    auto seeds = corpus::load_seed_manifest(config.seed_manifest);
    std::map<std::string, fs::path> seed_paths;
    for (const auto& seed : seeds.seeds) seed_paths[seed.id] = seed.image_path;

    auto records = dedup_manifest(paths.manifest_jsonl);

    ScoreSummary summary;
    std::map<std::string, std::size_t> exclusions;
    std::vector<scoring::PairDelta> pairs;
    summary.generated = records.size();

    for (const auto& rec : records) {
        if (rec.status == backend::GenStatus::Failed) {
            exclusions["generation_failed"]++;
            continue;
        }
        if (rec.status == backend::GenStatus::Invalid) {
            exclusions["generation_invalid"]++;
            continue;
        }
        auto seed_it = seed_paths.find(rec.seed_id);
        if (seed_it == seed_paths.end()) {
            exclusions["unknown_seed"]++;
            continue;
        }
        auto seed_props_it = props_by_image.find(seed_it->second.generic_string());
        auto gen_props_it = props_by_image.find(rec.image_path.generic_string());
        if (seed_props_it == props_by_image.end() || gen_props_it == props_by_image.end()) {
            exclusions["missing_properties"]++;
            continue;
        }
        const auto& seed_props = seed_props_it->second;
        const auto& gen_props = gen_props_it->second;
        if (!seed_props.valid) {
            exclusions["seed_invalid"]++;
            continue;
        }
        if (!gen_props.valid) {
            if (gen_props.face_count == 0) {
                exclusions["gen_no_face"]++;
            } else if (gen_props.gender == vision::GenderState::Inconsistent) {
                exclusions["gen_inconsistent_gender"]++;
            } else {
                exclusions["gen_empty_skin_mask"]++;
            }
            continue;
        }
        pairs.push_back(scoring::make_pair_delta(rec.seed_id, rec.prompt_id, rec.word, rec.domain,
                                                 rec.model_id, config.variant, seed_props,
                                                 gen_props, config.thresholds));
    }
    summary.scored = pairs.size();

    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
        return std::tie(a.seed_id, a.prompt_id) < std::tie(b.seed_id, b.prompt_id);
    });
    write_score_set(paths.run_dir, pairs);

    std::size_t excluded_total = 0;
    nlohmann::json excl = nlohmann::json::object();
    for (const auto& [reason, count] : exclusions) {
        excl[reason] = count;
        excluded_total += count;
    }
    summary.exclusions = excl;
    nlohmann::json audit = {
        {"generated", summary.generated},
        {"scored", summary.scored},
        {"excluded", excl},
        {"excluded_total", excluded_total},
        {"thresholds", {{"age", config.thresholds.age}, {"race", config.thresholds.race}}},
        {"exposure", {{"v_min", config.exposure.v_min}, {"v_max", config.exposure.v_max}}},
        {"gray_convention", "rec601_luma_higher_is_lighter"},
    };
    atomic_write_file(paths.audit_json, audit.dump(2) + "\n");

    mark_stage_complete(config, "score",
                        {{"generated", summary.generated},
                         {"scored", summary.scored},
                         {"excluded_total", excluded_total}});
    log_event("score", "done", {{"pairs", summary.scored}, {"excluded", excluded_total}});
    return summary;
}

void write_score_set(const fs::path& dir, const std::vector<scoring::PairDelta>& pairs) {
    std::error_code ec;
    fs::create_directories(dir, ec);

    std::string pair_body;
    for (const auto& p : pairs) pair_body += p.to_json().dump() + "\n";
    atomic_write_file(dir / "pairs.jsonl", pair_body);

    auto words = scoring::aggregate_words(pairs);
    std::string word_body;
    for (const auto& w : words) word_body += w.to_json().dump() + "\n";
    atomic_write_file(dir / "words.jsonl", word_body);

    auto models = scoring::aggregate_models(words);
    std::string model_body;
    for (const auto& m : models) model_body += m.to_json().dump() + "\n";
    // Per-(model, variant) "Ave" rows: the mean over the 12 domain x attribute
    // cells, appended after the domain rows. Runs covering fewer than four
    // domains get no Ave row (the mean is defined over the full grid only).
    std::map<std::pair<std::string, scoring::Variant>, std::set<corpus::Domain>> model_keys;
    for (const auto& m : models) model_keys[{m.model_id, m.variant}].insert(m.domain);
    for (const auto& [key, domains] : model_keys) {
        if (domains.size() != 4) continue;
        nlohmann::json row = {
            {"model_id", key.first},
            {"variant", std::string(scoring::to_string(key.second))},
            {"model_average", scoring::model_average_of(models, key.first, key.second)},
        };
        model_body += row.dump() + "\n";
    }
    atomic_write_file(dir / "models.jsonl", model_body);
}

std::vector<scoring::PairDelta> read_pairs(const fs::path& path) {
    std::vector<scoring::PairDelta> pairs;
    for (const auto& row : read_jsonl(path)) {
        pairs.push_back(scoring::PairDelta::from_json(row));
    }
    return pairs;
}

std::vector<scoring::WordBiasScore> read_words(const fs::path& path) {
    std::vector<scoring::WordBiasScore> words;
    for (const auto& row : read_jsonl(path)) {
        words.push_back(scoring::WordBiasScore::from_json(row));
    }
    return words;
}

report::ReportBundle stage_report(const RunConfig& config) {
    config.validate();
    auto paths = run_paths(config);
    require_artifact(paths.words_jsonl, "score");
    require_artifact(paths.models_jsonl, "score");
    require_artifact(paths.audit_json, "score");

    report::BundleInputs inputs;
    inputs.run_id = config.run_id();
    inputs.words = read_words(paths.words_jsonl);
    for (const auto& row : read_jsonl(paths.models_jsonl)) {
        if (row.contains("domain")) {
            inputs.models.push_back(scoring::ModelBiasScore::from_json(row));
        }
    }
    inputs.audit = nlohmann::json::parse(read_text_file(paths.audit_json));
    if (fs::exists(paths.mitigation_json)) {
        auto doc = nlohmann::json::parse(read_text_file(paths.mitigation_json));
        scoring::MitigationComparison cmp;
        for (const auto& row : doc.at("rows")) {
            scoring::MitigationRow r;
            r.key.model_id = row.at("model_id").get<std::string>();
            r.key.attribute = scoring::parse_attribute(row.at("attribute").get<std::string>());
            r.key.word = row.at("word").get<std::string>();
            r.ori = row.at("ori").get<double>();
            r.miti = row.at("miti").get<double>();
            cmp.rows.push_back(r);
        }
        for (const auto& row : doc.at("summaries")) {
            scoring::MitigationSummary s;
            s.model_id = row.at("model_id").get<std::string>();
            s.score_ori = row.at("score_ori").get<double>();
            s.score_miti = row.at("score_miti").get<double>();
            cmp.summaries.push_back(s);
        }
        inputs.mitigation = std::move(cmp);
    }

    auto bundle = report::emit_bundle(inputs, config.output_dir);
    mark_stage_complete(config, "report",
                        {{"tables", bundle.tables.size()}, {"figures", bundle.figures.size()}});
    log_event("report", "done", {{"dir", (config.output_dir / "reports" / inputs.run_id).string()}});
    return bundle;
}

namespace {

std::string threshold_tag(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

}  // namespace

std::vector<fs::path> stage_ablate(const RunConfig& config,
                                   const std::vector<double>& age_thresholds,
                                   const std::vector<double>& race_thresholds) {
    config.validate();
    auto paths = run_paths(config);
    require_artifact(paths.pairs_jsonl, "score");

    auto pairs = read_pairs(paths.pairs_jsonl);
    std::vector<fs::path> dirs;
    for (double age : age_thresholds) {
        for (double race : race_thresholds) {
            scoring::Thresholds t{age, race};
            auto rescored = scoring::rescore_with_thresholds(pairs, t);
            fs::path dir = paths.ablation_dir /
                           ("age" + threshold_tag(age) + "_race" + threshold_tag(race));
            write_score_set(dir, rescored);
            dirs.push_back(dir);
        }
    }
    mark_stage_complete(config, "ablate", {{"combinations", dirs.size()}});
    log_event("ablate", "done", {{"combinations", dirs.size()}});
    return dirs;
}

scoring::MitigationComparison stage_mitigate_compare(const RunConfig& config) {
    config.validate();
    RunConfig ori_config = config;
    ori_config.variant = scoring::Variant::Ori;
    RunConfig miti_config = config;
    miti_config.variant = scoring::Variant::Miti;

    auto ori_paths = run_paths(ori_config);
    auto miti_paths = run_paths(miti_config);
    require_artifact(ori_paths.words_jsonl, "score (variant=ori)");
    require_artifact(miti_paths.words_jsonl, "score (variant=miti)");

    auto ori_words = read_words(ori_paths.words_jsonl);
    auto miti_words = read_words(miti_paths.words_jsonl);
    std::string model_id = backend_model_id(load_backend_config(config));

    auto keys = scoring::select_mitigation_keys(ori_words, model_id, corpus::Domain::Profession);
    auto comparison = scoring::mitigation_delta(ori_words, miti_words, keys);

    nlohmann::json doc;
    doc["rows"] = nlohmann::json::array();
    for (const auto& row : comparison.rows) {
        doc["rows"].push_back({{"model_id", row.key.model_id},
                               {"attribute", std::string(scoring::to_string(row.key.attribute))},
                               {"word", row.key.word},
                               {"ori", row.ori},
                               {"miti", row.miti}});
    }
    doc["summaries"] = nlohmann::json::array();
    for (const auto& s : comparison.summaries) {
        doc["summaries"].push_back({{"model_id", s.model_id},
                                    {"score_ori", s.score_ori},
                                    {"score_miti", s.score_miti}});
    }
    atomic_write_file(ori_paths.mitigation_json, doc.dump(2) + "\n");

    mark_stage_complete(ori_config, "mitigate_compare", {{"keys", comparison.rows.size()}});
    log_event("mitigate_compare", "done", {{"keys", comparison.rows.size()}});
    return comparison;
}

nlohmann::json load_backend_config(const RunConfig& config) {
    try {
        return nlohmann::json::parse(read_text_file(config.backend_config));
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::ConfigInvalid, config.backend_config.string() + ": " + e.what());
    }
}

std::string backend_model_id(const nlohmann::json& backend_config) {
    return backend_config.value("model_id", std::string("model"));
}

}  // namespace fairlens::pipeline
