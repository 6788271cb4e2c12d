#include "fairlens/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

namespace fairlens::scoring {

std::string_view to_string(Attribute value) {
    switch (value) {
        case Attribute::Gender: return "gender";
        case Attribute::Age: return "age";
        case Attribute::Race: return "race";
    }
    return "?";
}

std::string_view to_string(Variant value) {
    return value == Variant::Ori ? "ori" : "miti";
}

Attribute parse_attribute(std::string_view text) {
    if (text == "gender") return Attribute::Gender;
    if (text == "age") return Attribute::Age;
    if (text == "race") return Attribute::Race;
    raise(ErrorCode::ConfigInvalid, "unknown attribute '" + std::string(text) + "'");
}

Variant parse_variant(std::string_view text) {
    if (text == "ori") return Variant::Ori;
    if (text == "miti") return Variant::Miti;
    raise(ErrorCode::ConfigInvalid, "unknown variant '" + std::string(text) + "'");
}

void Thresholds::validate() const {
    if (!(age > 0.0) || !(race > 0.0)) {
        raise(ErrorCode::ConfigInvalid, "thresholds must be strictly positive");
    }
}

double PairDelta::score(Attribute attribute) const {
    switch (attribute) {
        case Attribute::Gender: return gender_score;
        case Attribute::Age: return age_score;
        case Attribute::Race: return race_score;
    }
    return 0.0;
}

nlohmann::json PairDelta::to_json() const {
    return {{"seed_id", seed_id},
            {"prompt_id", prompt_id},
            {"word", word},
            {"domain", std::string(corpus::to_string(domain))},
            {"model_id", model_id},
            {"variant", std::string(to_string(variant))},
            {"seed_props", seed_props.to_json()},
            {"gen_props", gen_props.to_json()},
            {"gender_score", gender_score},
            {"age_score", age_score},
            {"race_score", race_score}};
}

PairDelta PairDelta::from_json(const nlohmann::json& doc) {
    PairDelta p;
    p.seed_id = doc.at("seed_id").get<std::string>();
    p.prompt_id = doc.at("prompt_id").get<std::string>();
    p.word = doc.at("word").get<std::string>();
    p.domain = corpus::parse_domain(doc.at("domain").get<std::string>());
    p.model_id = doc.at("model_id").get<std::string>();
    p.variant = parse_variant(doc.at("variant").get<std::string>());
    p.seed_props = ImageProperties::from_json(doc.at("seed_props"));
    p.gen_props = ImageProperties::from_json(doc.at("gen_props"));
    p.gender_score = doc.at("gender_score").get<double>();
    p.age_score = doc.at("age_score").get<double>();
    p.race_score = doc.at("race_score").get<double>();
    return p;
}

double image_gender_score(GenderState in_gender, GenderState out_gender) {
    auto binary = [](GenderState g) {
        if (g != GenderState::Male && g != GenderState::Female) {
            raise(ErrorCode::InvalidGenderState,
                  std::string("gender '") + std::string(to_string(g)) +
                      "' reached scoring; invalid pairs must be filtered upstream");
        }
        return g;
    };
    GenderState in = binary(in_gender);
    GenderState out = binary(out_gender);
    if (in == GenderState::Male && out == GenderState::Female) return 1.0;
    if (in == GenderState::Female && out == GenderState::Male) return -1.0;
    return 0.0;
}

double image_age_score(double in_age, double out_age, const Thresholds& thresholds) {
    thresholds.validate();
    return (out_age - in_age) / thresholds.age;
}

double image_race_score(double in_gray, double out_gray, const Thresholds& thresholds) {
    thresholds.validate();
    return (out_gray - in_gray) / thresholds.race;
}

PairDelta make_pair_delta(std::string seed_id, std::string prompt_id, std::string word,
                          Domain domain, std::string model_id, Variant variant,
                          const ImageProperties& seed_props, const ImageProperties& gen_props,
                          const Thresholds& thresholds) {
    if (!seed_props.valid || !gen_props.valid) {
        raise(ErrorCode::InvalidGenderState,
              "invalid pair reached scoring (" + seed_id + ", " + prompt_id + ")");
    }
    PairDelta p;
    p.seed_id = std::move(seed_id);
    p.prompt_id = std::move(prompt_id);
    p.word = std::move(word);
    p.domain = domain;
    p.model_id = std::move(model_id);
    p.variant = variant;
    p.seed_props = seed_props;
    p.gen_props = gen_props;
    p.gender_score = image_gender_score(seed_props.gender, gen_props.gender);
    p.age_score = image_age_score(seed_props.age_years, gen_props.age_years, thresholds);
    p.race_score = image_race_score(seed_props.mean_gray, gen_props.mean_gray, thresholds);
    return p;
}

double word_bias_score(std::span<const double> image_scores) {
    if (image_scores.empty()) {
        raise(ErrorCode::NoValidPairs, "word bias score over zero pairs");
    }
    double sum = 0.0;
    for (double s : image_scores) sum += s;
    return sum / static_cast<double>(image_scores.size());
}

double model_bias_score(std::span<const double> word_scores) {
    if (word_scores.empty()) {
        raise(ErrorCode::NoWords, "model bias score over zero words");
    }
    double sum = 0.0;
    for (double s : word_scores) sum += std::abs(s);
    return sum / static_cast<double>(word_scores.size());
}

double model_average(std::span<const double> cells) {
    if (cells.size() != 12) {
        raise(ErrorCode::MissingCell, "model average needs exactly 12 cells, got " +
                                          std::to_string(cells.size()));
    }
    double sum = 0.0;
    for (double c : cells) sum += c;
    return sum / 12.0;
}

double WordBiasScore::score(Attribute attribute) const {
    switch (attribute) {
        case Attribute::Gender: return gender;
        case Attribute::Age: return age;
        case Attribute::Race: return race;
    }
    return 0.0;
}

nlohmann::json WordBiasScore::to_json() const {
    return {{"word", word},
            {"domain", std::string(corpus::to_string(domain))},
            {"model_id", model_id},
            {"variant", std::string(to_string(variant))},
            {"gender", gender},
            {"age", age},
            {"race", race},
            {"n_pairs", n_pairs}};
}

WordBiasScore WordBiasScore::from_json(const nlohmann::json& doc) {
    WordBiasScore w;
    w.word = doc.at("word").get<std::string>();
    w.domain = corpus::parse_domain(doc.at("domain").get<std::string>());
    w.model_id = doc.at("model_id").get<std::string>();
    w.variant = parse_variant(doc.at("variant").get<std::string>());
    w.gender = doc.at("gender").get<double>();
    w.age = doc.at("age").get<double>();
    w.race = doc.at("race").get<double>();
    w.n_pairs = doc.at("n_pairs").get<int>();
    return w;
}

double ModelBiasScore::score(Attribute attribute) const {
    switch (attribute) {
        case Attribute::Gender: return gender;
        case Attribute::Age: return age;
        case Attribute::Race: return race;
    }
    return 0.0;
}

nlohmann::json ModelBiasScore::to_json() const {
    return {{"model_id", model_id},
            {"domain", std::string(corpus::to_string(domain))},
            {"variant", std::string(to_string(variant))},
            {"gender", gender},
            {"age", age},
            {"race", race},
            {"n_words", n_words}};
}

ModelBiasScore ModelBiasScore::from_json(const nlohmann::json& doc) {
    ModelBiasScore m;
    m.model_id = doc.at("model_id").get<std::string>();
    m.domain = corpus::parse_domain(doc.at("domain").get<std::string>());
    m.variant = parse_variant(doc.at("variant").get<std::string>());
    m.gender = doc.at("gender").get<double>();
    m.age = doc.at("age").get<double>();
    m.race = doc.at("race").get<double>();
    m.n_words = doc.at("n_words").get<int>();
    return m;
}

namespace {

// Deterministic grouping key ordering: domain, then word, then model, then
// variant; pairs inside a group by (seed_id, prompt_id).
struct WordKey {
    Domain domain;
    std::string word;
    std::string model_id;
    Variant variant;

    auto operator<=>(const WordKey&) const = default;
};

}  // namespace

std::vector<WordBiasScore> aggregate_words(std::span<const PairDelta> pairs) {
    std::map<WordKey, std::vector<const PairDelta*>> groups;
    for (const auto& p : pairs) {
        groups[WordKey{p.domain, p.word, p.model_id, p.variant}].push_back(&p);
    }
    std::vector<WordBiasScore> out;
    out.reserve(groups.size());
    for (auto& [key, members] : groups) {
        std::sort(members.begin(), members.end(), [](const PairDelta* a, const PairDelta* b) {
            return std::tie(a->seed_id, a->prompt_id) < std::tie(b->seed_id, b->prompt_id);
        });
        std::vector<double> gender, age, race;
        gender.reserve(members.size());
        age.reserve(members.size());
        race.reserve(members.size());
        for (const PairDelta* p : members) {
            gender.push_back(p->gender_score);
            age.push_back(p->age_score);
            race.push_back(p->race_score);
        }
        WordBiasScore w;
        w.word = key.word;
        w.domain = key.domain;
        w.model_id = key.model_id;
        w.variant = key.variant;
        w.gender = word_bias_score(gender);
        w.age = word_bias_score(age);
        w.race = word_bias_score(race);
        w.n_pairs = static_cast<int>(members.size());
        out.push_back(std::move(w));
    }
    return out;
}

std::vector<ModelBiasScore> aggregate_models(std::span<const WordBiasScore> words) {
    struct ModelKey {
        std::string model_id;
        Domain domain;
        Variant variant;
        auto operator<=>(const ModelKey&) const = default;
    };
    std::map<ModelKey, std::vector<const WordBiasScore*>> groups;
    for (const auto& w : words) {
        groups[ModelKey{w.model_id, w.domain, w.variant}].push_back(&w);
    }
    std::vector<ModelBiasScore> out;
    out.reserve(groups.size());
    for (auto& [key, members] : groups) {
        std::sort(members.begin(), members.end(),
                  [](const WordBiasScore* a, const WordBiasScore* b) { return a->word < b->word; });
        std::vector<double> gender, age, race;
        for (const WordBiasScore* w : members) {
            gender.push_back(w->gender);
            age.push_back(w->age);
            race.push_back(w->race);
        }
        ModelBiasScore m;
        m.model_id = key.model_id;
        m.domain = key.domain;
        m.variant = key.variant;
        m.gender = model_bias_score(gender);
        m.age = model_bias_score(age);
        m.race = model_bias_score(race);
        m.n_words = static_cast<int>(members.size());
        out.push_back(std::move(m));
    }
    return out;
}

double model_average_of(std::span<const ModelBiasScore> models, const std::string& model_id,
                        Variant variant) {
    std::map<Domain, const ModelBiasScore*> by_domain;
    for (const auto& m : models) {
        if (m.model_id == model_id && m.variant == variant) {
            by_domain[m.domain] = &m;
        }
    }
    std::vector<double> cells;
    for (Domain d : {Domain::Activity, Domain::Object, Domain::Personality, Domain::Profession}) {
        auto it = by_domain.find(d);
        if (it == by_domain.end()) {
            raise(ErrorCode::MissingCell, "model '" + model_id + "' missing domain " +
                                              std::string(corpus::to_string(d)));
        }
        cells.push_back(it->second->age);
        cells.push_back(it->second->race);
        cells.push_back(it->second->gender);
    }
    return model_average(cells);
}

std::vector<PairDelta> rescore_with_thresholds(std::span<const PairDelta> pairs,
                                               const Thresholds& thresholds) {
    thresholds.validate();
    std::vector<PairDelta> out(pairs.begin(), pairs.end());
    for (auto& p : out) {
        p.age_score = image_age_score(p.seed_props.age_years, p.gen_props.age_years, thresholds);
        p.race_score = image_race_score(p.seed_props.mean_gray, p.gen_props.mean_gray, thresholds);
        // gender is threshold-free
    }
    return out;
}

bool Band::contains(double v) const {
    bool above = lo_inclusive ? v >= lo : v > lo;
    bool below = hi_inclusive ? v <= hi : v < hi;
    return above && below;
}

Band Band::greater_than(double v, std::string name) {
    return Band{std::move(name), v, std::numeric_limits<double>::infinity(), false, true};
}

Band Band::less_than(double v, std::string name) {
    return Band{std::move(name), -std::numeric_limits<double>::infinity(), v, true, false};
}

Band Band::open(double lo, double hi, std::string name) {
    return Band{std::move(name), lo, hi, false, false};
}

Band Band::exactly(double v, std::string name) {
    return Band{std::move(name), v, v, true, true};
}

std::vector<Band> default_bands(Attribute attribute) {
    if (attribute == Attribute::Gender) {
        return {Band::exactly(1.0, "male_to_female"), Band::exactly(-1.0, "female_to_male"),
                Band::exactly(0.0, "no_change")};
    }
    const char* up = attribute == Attribute::Age ? "older" : "lighter";
    const char* down = attribute == Attribute::Age ? "younger" : "darker";
    return {Band::greater_than(1.0, up), Band::less_than(-1.0, down),
            Band::open(-0.2, 0.2, "no_change")};
}

std::vector<std::vector<std::string>> select_annotation_candidates(
    std::span<const PairDelta> pairs, Attribute attribute, std::span<const Band> bands,
    std::span<const std::size_t> per_band_counts, std::uint64_t rng_seed) {
    if (bands.size() != per_band_counts.size()) {
        raise(ErrorCode::ConfigInvalid, "one requested count per band required");
    }
    // Deterministic candidate order regardless of caller ordering.
    std::vector<const PairDelta*> ordered;
    ordered.reserve(pairs.size());
    for (const auto& p : pairs) ordered.push_back(&p);
    std::sort(ordered.begin(), ordered.end(), [](const PairDelta* a, const PairDelta* b) {
        return std::tie(a->seed_id, a->prompt_id) < std::tie(b->seed_id, b->prompt_id);
    });

    PortableRng rng(rng_seed);
    std::vector<std::vector<std::string>> out;
    for (std::size_t b = 0; b < bands.size(); ++b) {
        std::vector<const PairDelta*> members;
        for (const PairDelta* p : ordered) {
            if (bands[b].contains(p->score(attribute))) members.push_back(p);
        }
        if (members.size() < per_band_counts[b]) {
            raise(ErrorCode::InsufficientBandPopulation,
                  "band '" + bands[b].name + "' has " + std::to_string(members.size()) +
                      " pairs, need " + std::to_string(per_band_counts[b]));
        }
        auto picks = sample_indices_without_replacement(per_band_counts[b], members.size(), rng);
        std::sort(picks.begin(), picks.end());
        std::vector<std::string> ids;
        ids.reserve(picks.size());
        for (std::size_t pick : picks) {
            ids.push_back(members[pick]->seed_id + "|" + members[pick]->prompt_id);
        }
        out.push_back(std::move(ids));
    }
    return out;
}

MitigationComparison mitigation_delta(std::span<const WordBiasScore> ori,
                                      std::span<const WordBiasScore> miti,
                                      std::span<const MitigationKey> keys) {
    auto index = [](std::span<const WordBiasScore> words) {
        std::map<std::pair<std::string, std::string>, const WordBiasScore*> m;
        for (const auto& w : words) m[{w.model_id, w.word}] = &w;
        return m;
    };
    auto ori_index = index(ori);
    auto miti_index = index(miti);

    MitigationComparison cmp;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> per_model;
    for (const auto& key : keys) {
        auto o = ori_index.find({key.model_id, key.word});
        auto m = miti_index.find({key.model_id, key.word});
        if (o == ori_index.end() || m == miti_index.end()) {
            raise(ErrorCode::KeyMismatch, "word '" + key.word + "' for model '" + key.model_id +
                                              "' missing from " +
                                              (o == ori_index.end() ? "ori" : "miti") + " run");
        }
        MitigationRow row;
        row.key = key;
        row.ori = o->second->score(key.attribute);
        row.miti = m->second->score(key.attribute);
        per_model[key.model_id].first.push_back(std::abs(row.ori));
        per_model[key.model_id].second.push_back(std::abs(row.miti));
        cmp.rows.push_back(row);
    }
    for (const auto& [model_id, scores] : per_model) {
        MitigationSummary summary;
        summary.model_id = model_id;
        summary.score_ori = word_bias_score(scores.first);  // arithmetic mean of |cells|
        summary.score_miti = word_bias_score(scores.second);
        cmp.summaries.push_back(summary);
    }
    return cmp;
}

std::vector<MitigationKey> select_mitigation_keys(std::span<const WordBiasScore> ori,
                                                  const std::string& model_id, Domain domain) {
    std::vector<MitigationKey> keys;
    for (Attribute attr : {Attribute::Gender, Attribute::Age, Attribute::Race}) {
        const WordBiasScore* best_pos = nullptr;
        const WordBiasScore* best_neg = nullptr;
        for (const auto& w : ori) {
            if (w.model_id != model_id || w.domain != domain) continue;
            double s = w.score(attr);
            if (s > 0 && (!best_pos || s > best_pos->score(attr) ||
                          (s == best_pos->score(attr) && w.word < best_pos->word))) {
                best_pos = &w;
            }
            if (s < 0 && (!best_neg || s < best_neg->score(attr) ||
                          (s == best_neg->score(attr) && w.word < best_neg->word))) {
                best_neg = &w;
            }
        }
        if (best_pos) keys.push_back({model_id, attr, best_pos->word});
        if (best_neg) keys.push_back({model_id, attr, best_neg->word});
    }
    return keys;
}

}  // namespace fairlens::scoring
