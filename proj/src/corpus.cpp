#include "fairlens/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fairlens/image.hpp"

namespace fairlens::corpus {

namespace fs = std::filesystem;

std::string_view to_string(Race value) {
    switch (value) {
        case Race::White: return "white";
        case Race::Black: return "black";
        case Race::EastAsian: return "east_asian";
    }
    return "?";
}

std::string_view to_string(Gender value) {
    return value == Gender::Male ? "male" : "female";
}

std::string_view to_string(AgeBand value) {
    switch (value) {
        case AgeBand::YoungAdult: return "young_adult";
        case AgeBand::MiddleAged: return "middle_aged";
        case AgeBand::Elderly: return "elderly";
    }
    return "?";
}

Race parse_race(std::string_view text) {
    if (text == "white") return Race::White;
    if (text == "black") return Race::Black;
    if (text == "east_asian") return Race::EastAsian;
    raise(ErrorCode::MalformedManifest, "unknown race '" + std::string(text) + "'");
}

Gender parse_gender(std::string_view text) {
    if (text == "male") return Gender::Male;
    if (text == "female") return Gender::Female;
    raise(ErrorCode::MalformedManifest, "unknown gender '" + std::string(text) + "'");
}

AgeBand parse_age_band(std::string_view text) {
    if (text == "young_adult") return AgeBand::YoungAdult;
    if (text == "middle_aged") return AgeBand::MiddleAged;
    if (text == "elderly") return AgeBand::Elderly;
    raise(ErrorCode::MalformedManifest, "unknown age_band '" + std::string(text) + "'");
}

std::string DemographicGroup::label() const {
    std::string out;
    out += to_string(race);
    out += '/';
    out += to_string(gender);
    out += '/';
    out += to_string(age_band);
    return out;
}

std::array<DemographicGroup, kGroupCount> all_groups() {
    std::array<DemographicGroup, kGroupCount> groups{};
    int i = 0;
    for (int r = 0; r < kRaceCount; ++r) {
        for (int g = 0; g < kGenderCount; ++g) {
            for (int a = 0; a < kAgeBandCount; ++a) {
                groups[static_cast<std::size_t>(i++)] = DemographicGroup{
                    static_cast<Race>(r), static_cast<Gender>(g), static_cast<AgeBand>(a)};
            }
        }
    }
    return groups;
}

std::string_view to_string(Domain value) {
    switch (value) {
        case Domain::Activity: return "activity";
        case Domain::Object: return "object";
        case Domain::Personality: return "personality";
        case Domain::Profession: return "profession";
    }
    return "?";
}

Domain parse_domain(std::string_view text) {
    if (text == "activity") return Domain::Activity;
    if (text == "object") return Domain::Object;
    if (text == "personality") return Domain::Personality;
    if (text == "profession") return Domain::Profession;
    raise(ErrorCode::MalformedManifest, "unknown domain '" + std::string(text) + "'");
}

namespace {

// Minimal RFC-4180 reader: quoted fields, doubled quotes, no embedded
// newlines (none of our formats need them).
std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    std::size_t i = 0;
    while (i < line.size()) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            if (!cur.empty()) {
                raise(ErrorCode::MalformedManifest,
                      "line " + std::to_string(line_no) + ": stray quote");
            }
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
        ++i;
    }
    if (quoted) {
        raise(ErrorCode::MalformedManifest,
              "line " + std::to_string(line_no) + ": unterminated quote");
    }
    fields.push_back(cur);
    return fields;
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(ErrorCode::MissingFile, path.string());
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

constexpr const char* kManifestHeader = "id,path,race,gender,age_band,source";

struct ManifestRow {
    std::string id;
    std::string path;
    DemographicGroup group;
    std::string source;
};

std::vector<ManifestRow> parse_manifest_rows(const fs::path& path) {
    auto lines = read_lines(path);
    if (lines.empty() || trim(lines[0]) != kManifestHeader) {
        raise(ErrorCode::MalformedManifest,
              path.string() + " line 1: expected header '" + kManifestHeader + "'");
    }
    std::vector<ManifestRow> rows;
    std::set<std::string> ids;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        std::size_t line_no = i + 1;
        auto fields = split_csv_line(lines[i], line_no);
        if (fields.size() != 6) {
            raise(ErrorCode::MalformedManifest, path.string() + " line " + std::to_string(line_no) +
                                                    ": expected 6 fields, got " +
                                                    std::to_string(fields.size()));
        }
        ManifestRow row;
        row.id = trim(fields[0]);
        row.path = trim(fields[1]);
        if (row.id.empty() || row.path.empty()) {
            raise(ErrorCode::MalformedManifest,
                  path.string() + " line " + std::to_string(line_no) + ": empty id or path");
        }
        if (!ids.insert(row.id).second) {
            raise(ErrorCode::MalformedManifest, path.string() + " line " + std::to_string(line_no) +
                                                    ": duplicate id '" + row.id + "'");
        }
        try {
            row.group.race = parse_race(trim(fields[2]));
            row.group.gender = parse_gender(trim(fields[3]));
            row.group.age_band = parse_age_band(trim(fields[4]));
        } catch (const Error& e) {
            raise(ErrorCode::MalformedManifest,
                  path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
        row.source = trim(fields[5]);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        raise(ErrorCode::MalformedManifest, path.string() + ": no data rows");
    }
    return rows;
}

fs::path resolve_against(const fs::path& base_file, const std::string& rel) {
    fs::path p(rel);
    if (p.is_absolute()) return p;
    return base_file.parent_path() / p;
}

// Groups present in the set must all appear the same number of times.
int validate_group_balance(const std::vector<SeedImage>& seeds) {
    std::map<int, int> counts;
    for (const auto& s : seeds) counts[s.group.ordinal()]++;
    int expected = counts.begin()->second;
    for (const auto& [ordinal, count] : counts) {
        if (count != expected) {
            auto groups = all_groups();
            raise(ErrorCode::GroupImbalance,
                  "group " + groups[static_cast<std::size_t>(ordinal)].label() + " has " +
                      std::to_string(count) + " seeds, expected " + std::to_string(expected) +
                      " (count of first group)");
        }
    }
    return expected;
}

}  // namespace

SeedSet load_seed_manifest(const fs::path& path) {
    auto rows = parse_manifest_rows(path);
    SeedSet set;
    for (const auto& row : rows) {
        SeedImage seed;
        seed.id = row.id;
        seed.image_path = resolve_against(path, row.path);
        seed.group = row.group;
        seed.source_tag = row.source;
        load_png(seed.image_path);  // decode once to confirm readability
        set.seeds.push_back(std::move(seed));
    }
    set.per_group_count = validate_group_balance(set.seeds);
    return set;
}

void write_seed_manifest(const SeedSet& set, const fs::path& path) {
    std::ostringstream out;
    out << kManifestHeader << '\n';
    for (const auto& s : set.seeds) {
        fs::path rel = s.image_path.lexically_proximate(path.parent_path());
        out << csv_escape(s.id) << ',' << csv_escape(rel.generic_string()) << ','
            << to_string(s.group.race) << ',' << to_string(s.group.gender) << ','
            << to_string(s.group.age_band) << ',' << csv_escape(s.source_tag) << '\n';
    }
    write_text_file(path, out.str());
}

std::vector<CorpusCandidate> load_corpus_index(const fs::path& path) {
    auto rows = parse_manifest_rows(path);
    std::vector<CorpusCandidate> out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
        out.push_back(CorpusCandidate{row.id, resolve_against(path, row.path), row.group,
                                      row.source});
    }
    return out;
}

SeedSet sample_seed_set(const std::vector<CorpusCandidate>& corpus_index, int per_group,
                        std::uint64_t rng_seed) {
    if (per_group <= 0) {
        raise(ErrorCode::ConfigInvalid, "per_group must be positive");
    }
    std::array<std::vector<std::size_t>, kGroupCount> by_group;
    for (std::size_t i = 0; i < corpus_index.size(); ++i) {
        by_group[static_cast<std::size_t>(corpus_index[i].group.ordinal())].push_back(i);
    }
    auto groups = all_groups();
    PortableRng rng(rng_seed);
    SeedSet set;
    set.per_group_count = per_group;
    for (const auto& group : groups) {
        const auto& candidates = by_group[static_cast<std::size_t>(group.ordinal())];
        if (candidates.size() < static_cast<std::size_t>(per_group)) {
            raise(ErrorCode::InsufficientGroupCandidates,
                  "group " + group.label() + " has " + std::to_string(candidates.size()) +
                      " candidates, need " + std::to_string(per_group));
        }
        auto picks = sample_indices_without_replacement(static_cast<std::size_t>(per_group),
                                                        candidates.size(), rng);
        std::sort(picks.begin(), picks.end());
        for (std::size_t pick : picks) {
            const auto& c = corpus_index[candidates[pick]];
            set.seeds.push_back(SeedImage{c.id, c.image_path, c.group, c.source_tag});
        }
    }
    return set;
}

namespace {

bool starts_with_vowel(const std::string& word) {
    if (word.empty()) return false;
    char c = static_cast<char>(std::tolower(static_cast<unsigned char>(word[0])));
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

std::string article_for(const std::string& word, const std::string& override_article) {
    if (!override_article.empty()) return override_article;
    return starts_with_vowel(word) ? "an" : "a";
}

}  // namespace

Prompt build_prompt(const std::string& word, Domain domain, const std::string& article_override) {
    if (trim(word).empty()) {
        raise(ErrorCode::EmptyWord, "prompt word is empty");
    }
    Prompt prompt;
    prompt.word = word;
    prompt.domain = domain;
    switch (domain) {
        case Domain::Activity:
        case Domain::Personality:
            prompt.text = "a person who is " + word;
            break;
        case Domain::Profession:
            prompt.text = "a person who is " + article_for(word, article_override) + " " + word;
            break;
        case Domain::Object:
            prompt.text = "a person with " + article_for(word, article_override) + " " + word;
            break;
    }
    prompt.id = std::string(to_string(domain)) + ":" + word;
    return prompt;
}

std::vector<LexiconEntry> filter_lexicon(const std::vector<LexiconEntry>& entries) {
    std::vector<LexiconEntry> kept;
    for (const auto& entry : entries) {
        long long sum = 0;
        for (int s : entry.relevance_scores) sum += s;
        // mean <= 3 exactly, done on integers: sum <= 3 * n.
        if (sum <= 3ll * static_cast<long long>(entry.relevance_scores.size())) {
            kept.push_back(entry);
        }
    }
    return kept;
}

PromptList build_prompt_list(const std::vector<LexiconEntry>& filtered) {
    PromptList list;
    std::set<std::pair<Domain, std::string>> seen;
    for (const auto& entry : filtered) {
        if (!seen.insert({entry.domain, entry.word}).second) {
            raise(ErrorCode::DuplicateWordInDomain,
                  "'" + entry.word + "' appears twice in domain " +
                      std::string(to_string(entry.domain)));
        }
        list.prompts.push_back(build_prompt(entry.word, entry.domain, entry.article_override));
        list.domain_counts[entry.domain]++;
    }
    return list;
}

std::vector<LexiconEntry> load_lexicon(const fs::path& path) {
    auto lines = read_lines(path);
    if (lines.empty() || !trim(lines[0]).starts_with("word,domain,article_override")) {
        raise(ErrorCode::MalformedManifest,
              path.string() + " line 1: expected header 'word,domain,article_override,score1..'");
    }
    std::vector<LexiconEntry> entries;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        std::size_t line_no = i + 1;
        auto fields = split_csv_line(lines[i], line_no);
        if (fields.size() < 4) {
            raise(ErrorCode::MalformedManifest, path.string() + " line " + std::to_string(line_no) +
                                                    ": need word,domain,article_override,score1..");
        }
        LexiconEntry entry;
        std::string raw_word = trim(fields[0]);
        if (raw_word.empty()) {
            raise(ErrorCode::MalformedManifest,
                  path.string() + " line " + std::to_string(line_no) + ": empty word");
        }
        // An uppercase letter marks a proper noun kept verbatim (e.g. "CEO");
        // everything else is lowercased.
        bool has_upper = std::any_of(raw_word.begin(), raw_word.end(), [](unsigned char c) {
            return std::isupper(c) != 0;
        });
        entry.word = has_upper ? raw_word : to_lower_ascii(raw_word);
        try {
            entry.domain = parse_domain(trim(fields[1]));
        } catch (const Error& e) {
            raise(ErrorCode::MalformedManifest,
                  path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
        entry.article_override = trim(fields[2]);
        if (!entry.article_override.empty() && entry.article_override != "a" &&
            entry.article_override != "an") {
            raise(ErrorCode::MalformedManifest, path.string() + " line " + std::to_string(line_no) +
                                                    ": article_override must be '', 'a' or 'an'");
        }
        for (std::size_t f = 3; f < fields.size(); ++f) {
            std::string cell = trim(fields[f]);
            if (cell.empty()) {
                raise(ErrorCode::MalformedManifest,
                      path.string() + " line " + std::to_string(line_no) + ": blank score cell");
            }
            int score;
            try {
                std::size_t used = 0;
                score = std::stoi(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                raise(ErrorCode::MalformedManifest, path.string() + " line " +
                                                        std::to_string(line_no) +
                                                        ": bad score '" + cell + "'");
            }
            if (score < 1 || score > 5) {
                raise(ErrorCode::MalformedManifest, path.string() + " line " +
                                                        std::to_string(line_no) +
                                                        ": score out of [1,5]");
            }
            entry.relevance_scores.push_back(score);
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

nlohmann::json prompt_list_to_json(const PromptList& list) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : list.prompts) {
        arr.push_back({{"id", p.id},
                       {"word", p.word},
                       {"domain", std::string(to_string(p.domain))},
                       {"text", p.text}});
    }
    return arr;
}

PromptList prompt_list_from_json(const nlohmann::json& doc) {
    PromptList list;
    for (const auto& item : doc) {
        Prompt p;
        p.id = item.at("id").get<std::string>();
        p.word = item.at("word").get<std::string>();
        p.domain = parse_domain(item.at("domain").get<std::string>());
        p.text = item.at("text").get<std::string>();
        list.domain_counts[p.domain]++;
        list.prompts.push_back(std::move(p));
    }
    return list;
}

}  // namespace fairlens::corpus
