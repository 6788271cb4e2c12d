#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fairlens/common.hpp"

namespace fairlens::corpus {

enum class Race { White, Black, EastAsian };
enum class Gender { Male, Female };
enum class AgeBand { YoungAdult, MiddleAged, Elderly };

constexpr int kRaceCount = 3;
constexpr int kGenderCount = 2;
constexpr int kAgeBandCount = 3;
constexpr int kGroupCount = kRaceCount * kGenderCount * kAgeBandCount;  // 18

std::string_view to_string(Race value);
std::string_view to_string(Gender value);
std::string_view to_string(AgeBand value);
Race parse_race(std::string_view text);
Gender parse_gender(std::string_view text);
AgeBand parse_age_band(std::string_view text);

// One of the 18 (race, gender, age band) cells the seed set is stratified by.
struct DemographicGroup {
    Race race = Race::White;
    Gender gender = Gender::Male;
    AgeBand age_band = AgeBand::YoungAdult;

    // Canonical ordering: race-major, then gender, then age band.
    int ordinal() const {
        return (static_cast<int>(race) * kGenderCount + static_cast<int>(gender)) * kAgeBandCount +
               static_cast<int>(age_band);
    }
    std::string label() const;

    bool operator==(const DemographicGroup&) const = default;
    auto operator<=>(const DemographicGroup& other) const { return ordinal() <=> other.ordinal(); }
};

std::array<DemographicGroup, kGroupCount> all_groups();

// A labeled portrait used as editing input.
struct SeedImage {
    std::string id;
    std::filesystem::path image_path;
    DemographicGroup group;
    std::string source_tag;
};

struct SeedSet {
    std::vector<SeedImage> seeds;
    int per_group_count = 0;
};

// Candidate row of a corpus index eligible for stratified sampling.
struct CorpusCandidate {
    std::string id;
    std::filesystem::path image_path;
    DemographicGroup group;
    std::string source_tag;
};

enum class Domain { Activity, Object, Personality, Profession };

std::string_view to_string(Domain value);
Domain parse_domain(std::string_view text);

struct LexiconEntry {
    std::string word;
    Domain domain = Domain::Activity;
    std::string article_override;       // "", "a", or "an"
    std::vector<int> relevance_scores;  // one per annotator, each in [1, 5]
};

struct Prompt {
    std::string word;
    Domain domain = Domain::Activity;
    std::string text;
    std::string id;
};

struct PromptList {
    std::vector<Prompt> prompts;
    std::map<Domain, std::size_t> domain_counts;

    std::size_t size() const { return prompts.size(); }
};

// Loads and validates a seed manifest (CSV, header
// `id,path,race,gender,age_band,source`). Relative image paths resolve
// against the manifest's directory. Every image is decoded once to confirm
// readability; all groups present must appear the same number of times.
SeedSet load_seed_manifest(const std::filesystem::path& path);

// Writes the manifest format load_seed_manifest reads.
void write_seed_manifest(const SeedSet& set, const std::filesystem::path& path);

// Loads a corpus index: same CSV schema as the seed manifest but without the
// balance requirement or image decoding (sampling stays a pure function).
std::vector<CorpusCandidate> load_corpus_index(const std::filesystem::path& path);

// Stratified sampling: exactly per_group candidates drawn uniformly without
// replacement from each of the 18 groups. Deterministic in rng_seed; groups
// are visited in canonical ordinal order and candidates keep index order, so
// the draw sequence replays from the documented PortableRng algorithm alone.
SeedSet sample_seed_set(const std::vector<CorpusCandidate>& corpus_index, int per_group,
                        std::uint64_t rng_seed);

// Renders the per-domain template. `article_override` forces "a"/"an" where
// the first-letter vowel heuristic is wrong (e.g. "a unicycle").
Prompt build_prompt(const std::string& word, Domain domain,
                    const std::string& article_override = "");

// Keeps entries whose mean relevance is <= 3 (computed exactly on integer
// scores); order preserved.
std::vector<LexiconEntry> filter_lexicon(const std::vector<LexiconEntry>& entries);

// One prompt per already-filtered entry; duplicate words within a domain are
// rejected.
PromptList build_prompt_list(const std::vector<LexiconEntry>& filtered);

// Lexicon CSV: `word,domain,article_override,score1..scoreK`, variable K >= 1,
// blank score cells forbidden. Words are trimmed and lowercased unless they
// carry an uppercase letter, which marks them as proper nouns kept verbatim.
std::vector<LexiconEntry> load_lexicon(const std::filesystem::path& path);

nlohmann::json prompt_list_to_json(const PromptList& list);
PromptList prompt_list_from_json(const nlohmann::json& doc);

}  // namespace fairlens::corpus
