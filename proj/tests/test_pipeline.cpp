#include <doctest.h>

#include <nlohmann/json.hpp>

#include "fairlens/pipeline.hpp"
#include "helpers.hpp"

using namespace fairlens;
using testing::TempDir;

namespace {

using corpus::AgeBand;
using corpus::DemographicGroup;
using corpus::Domain;
using corpus::Gender;
using corpus::Race;

// Small all-male workspace with a synthetic gender flip on "nurse".
fixture::WorkspaceInfo flip_workspace(const TempDir& dir) {
    fixture::WorkspaceOptions options;
    options.dir = dir.path();
    options.groups = {DemographicGroup{Race::White, Gender::Male, AgeBand::YoungAdult},
                      DemographicGroup{Race::Black, Gender::Male, AgeBand::MiddleAged},
                      DemographicGroup{Race::EastAsian, Gender::Male, AgeBand::Elderly},
                      DemographicGroup{Race::White, Gender::Male, AgeBand::Elderly}};
    options.words = {{"nurse", Domain::Profession},
                     {"doctor", Domain::Profession},
                     {"gun", Domain::Object},
                     {"brave", Domain::Personality},
                     {"cooking", Domain::Activity}};
    options.profile.rules["nurse"] = backend::SyntheticRule{1.0, 0.0, 0.0};
    return fixture::write_fixture_workspace(options);
}

}  // namespace

TEST_CASE("config hash: key order irrelevant, semantic fields decisive") {
    TempDir dir;
    fixture::WorkspaceOptions options;
    options.dir = dir.path();
    options.groups = {DemographicGroup{}};
    auto info = fixture::write_fixture_workspace(options);

    auto config = pipeline::RunConfig::load(info.run_config);
    auto base_hash = config.config_hash();

    // Rewrite the config file with keys in reverse order: same hash.
    auto doc = nlohmann::json::parse(read_text_file(info.run_config));
    std::string reordered = "{";
    std::vector<std::string> keys;
    for (const auto& [k, v] : doc.items()) keys.push_back(k);
    for (auto it = keys.rbegin(); it != keys.rend(); ++it) {
        reordered += nlohmann::json(*it).dump() + ":" + doc[*it].dump() + ",";
    }
    reordered.back() = '}';
    write_text_file(info.run_config, reordered);
    CHECK(pipeline::RunConfig::load(info.run_config).config_hash() == base_hash);

    // Concurrency is not semantic.
    auto relaxed = config;
    relaxed.concurrency = 16;
    CHECK(relaxed.config_hash() == base_hash);

    // rng_seed, thresholds and variant are semantic.
    auto reseeded = config;
    reseeded.rng_seed = config.rng_seed + 1;
    CHECK(reseeded.config_hash() != base_hash);
    auto retuned = config;
    retuned.thresholds.race = 10.0;
    CHECK(retuned.config_hash() != base_hash);
    auto miti = config;
    miti.variant = scoring::Variant::Miti;
    CHECK(miti.config_hash() != base_hash);

    // Ori runs ignore the (unused) suffix; Miti runs key on it.
    auto ori_suffixed = config;
    ori_suffixed.mitigation_suffix = "different suffix";
    CHECK(ori_suffixed.config_hash() == base_hash);
    auto miti_suffixed = miti;
    miti_suffixed.mitigation_suffix = "different suffix";
    CHECK(miti_suffixed.config_hash() != miti.config_hash());
}

TEST_CASE("config validation failures") {
    TempDir dir;
    fixture::WorkspaceOptions options;
    options.dir = dir.path();
    options.groups = {DemographicGroup{}};
    auto info = fixture::write_fixture_workspace(options);
    auto config = pipeline::RunConfig::load(info.run_config);

    auto missing = config;
    missing.lexicon = dir / "nope.csv";
    CHECK_THROWS_AS(missing.validate(), Error);

    auto bad_threshold = config;
    bad_threshold.thresholds.age = 0.0;
    CHECK_THROWS_AS(bad_threshold.validate(), Error);

    auto empty_suffix = config;
    empty_suffix.variant = scoring::Variant::Miti;
    empty_suffix.mitigation_suffix = "  ";
    CHECK_THROWS_AS(empty_suffix.validate(), Error);
}

TEST_CASE("stage gating: each stage demands its upstream artifact") {
    TempDir dir;
    fixture::WorkspaceOptions options;
    options.dir = dir.path();
    options.groups = {DemographicGroup{}};
    auto info = fixture::write_fixture_workspace(options);
    auto config = pipeline::RunConfig::load(info.run_config);

    auto expects_gate = [](const std::function<void()>& fn) {
        try {
            fn();
            FAIL("expected StageDependencyMissing");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::StageDependencyMissing);
        }
    };
    expects_gate([&] { pipeline::stage_generate(config); });
    expects_gate([&] { pipeline::stage_assess(config); });
    expects_gate([&] { pipeline::stage_score(config); });
    expects_gate([&] { pipeline::stage_report(config); });
    expects_gate([&] { pipeline::stage_ablate(config, {25.0}, {20.0}); });
    expects_gate([&] { pipeline::stage_mitigate_compare(config); });
}

TEST_CASE("full pipeline detects an injected gender flip and only that") {
    TempDir dir;
    auto info = flip_workspace(dir);
    auto config = pipeline::RunConfig::load(info.run_config);

    auto prompts = pipeline::stage_build_prompts(config);
    CHECK(prompts.size() == 5);
    auto counts = pipeline::stage_generate(config);
    CHECK(counts.total == 20);  // 4 seeds x 5 prompts
    CHECK(counts.ok == 20);
    pipeline::stage_assess(config);
    auto summary = pipeline::stage_score(config);
    CHECK(summary.scored == 20);

    auto paths = pipeline::run_paths(config);
    auto words = pipeline::read_words(paths.words_jsonl);
    REQUIRE(words.size() == 5);
    for (const auto& w : words) {
        if (w.word == "nurse") {
            CHECK(w.gender == 1.0);  // all-male seeds, flip probability 1
        } else {
            CHECK(w.gender == 0.0);
        }
        CHECK(w.age == 0.0);
        CHECK(w.race == 0.0);
        CHECK(w.n_pairs == 4);
    }

    auto bundle = pipeline::stage_report(config);
    CHECK(bundle.tables.size() == 5);
    CHECK(bundle.figures.size() == 4);

    // Audit accounting: scored + excluded == generated.
    auto audit = nlohmann::json::parse(read_text_file(paths.audit_json));
    CHECK(audit.at("generated").get<int>() == 20);
    CHECK(audit.at("scored").get<int>() ==
          audit.at("generated").get<int>() - audit.at("excluded_total").get<int>());
}

TEST_CASE("ablation rescoring matches from-scratch runs bit for bit") {
    TempDir dir;
    auto info = flip_workspace(dir);
    auto config = pipeline::RunConfig::load(info.run_config);
    pipeline::stage_build_prompts(config);
    pipeline::stage_generate(config);
    pipeline::stage_assess(config);
    pipeline::stage_score(config);

    auto dirs = pipeline::stage_ablate(config, {15.0, 25.0}, {10.0, 20.0});
    REQUIRE(dirs.size() == 4);

    for (double age : {15.0, 25.0}) {
        for (double race : {10.0, 20.0}) {
            // From-scratch run at those thresholds: separate run id.
            auto fresh = config;
            fresh.thresholds = scoring::Thresholds{age, race};
            pipeline::stage_build_prompts(fresh);
            pipeline::stage_generate(fresh);
            pipeline::stage_assess(fresh);
            pipeline::stage_score(fresh);

            char tag[64];
            std::snprintf(tag, sizeof(tag), "age%g_race%g", age, race);
            auto ablated_words =
                read_text_file(pipeline::run_paths(config).ablation_dir / tag / "words.jsonl");
            auto fresh_words = read_text_file(pipeline::run_paths(fresh).words_jsonl);
            CHECK(ablated_words == fresh_words);
        }
    }
}

TEST_CASE("mitigate-compare joins Ori and Miti runs over top words") {
    TempDir dir;
    auto info = flip_workspace(dir);
    auto config = pipeline::RunConfig::load(info.run_config);

    for (auto variant : {scoring::Variant::Ori, scoring::Variant::Miti}) {
        auto v = config;
        v.variant = variant;
        pipeline::stage_build_prompts(v);
        pipeline::stage_generate(v);
        pipeline::stage_assess(v);
        pipeline::stage_score(v);
    }
    auto comparison = pipeline::stage_mitigate_compare(config);
    REQUIRE(comparison.summaries.size() == 1);
    // Only the gender attribute has a nonzero top word here ("nurse", +1 in
    // both variants since the synthetic profile keys on the word).
    REQUIRE(comparison.rows.size() == 1);
    CHECK(comparison.rows[0].key.word == "nurse");
    CHECK(comparison.rows[0].ori == 1.0);
    CHECK(comparison.rows[0].miti == 1.0);

    // The Ori-run report now includes mitigation.csv.
    auto ori = config;
    ori.variant = scoring::Variant::Ori;
    auto bundle = pipeline::stage_report(ori);
    CHECK(bundle.tables.size() == 6);  // 4 domain tables + models + mitigation
}

TEST_CASE("determinism: identical configs in fresh output dirs yield identical bytes") {
    TempDir dir_a, dir_b;
    fixture::WorkspaceOptions options_a;
    options_a.dir = dir_a.path();
    options_a.words = {{"nurse", Domain::Profession},
                       {"gun", Domain::Object},
                       {"brave", Domain::Personality},
                       {"cooking", Domain::Activity}};
    options_a.profile.rules["nurse"] = backend::SyntheticRule{1.0, 5.0, 10.0};
    auto info_a = fixture::write_fixture_workspace(options_a);
    auto options_b = options_a;
    options_b.dir = dir_b.path();
    auto info_b = fixture::write_fixture_workspace(options_b);

    auto run_all = [](const std::filesystem::path& cfg_path) {
        auto config = pipeline::RunConfig::load(cfg_path);
        pipeline::stage_build_prompts(config);
        pipeline::stage_generate(config);
        pipeline::stage_assess(config);
        pipeline::stage_score(config);
        pipeline::stage_report(config);
        return pipeline::run_paths(config);
    };
    auto paths_a = run_all(info_a.run_config);
    auto paths_b = run_all(info_b.run_config);

    CHECK(read_text_file(paths_a.words_jsonl) == read_text_file(paths_b.words_jsonl));
    CHECK(read_text_file(paths_a.models_jsonl) == read_text_file(paths_b.models_jsonl));
    auto config_a = pipeline::RunConfig::load(info_a.run_config);
    auto config_b = pipeline::RunConfig::load(info_b.run_config);
    for (const char* domain : {"activity", "object", "personality", "profession"}) {
        auto rel = std::filesystem::path("reports") / config_a.run_id() /
                   ("dist_" + std::string(domain) + ".svg");
        CHECK(read_text_file(config_a.output_dir / rel) ==
              read_text_file(config_b.output_dir /
                             (std::filesystem::path("reports") / config_b.run_id() /
                              ("dist_" + std::string(domain) + ".svg"))));
    }
}
