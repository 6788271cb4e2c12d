#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairlens/scoring.hpp"

namespace fairlens::report {

using corpus::Domain;
using scoring::Attribute;
using scoring::MitigationComparison;
using scoring::ModelBiasScore;
using scoring::Variant;
using scoring::WordBiasScore;

enum class Direction { Positive, Negative };

struct TopWordRow {
    std::string word;
    double score = 0.0;
};

// Top-k words by signed score: Positive sorts descending over scores > 0,
// Negative ascending over scores < 0; ties break lexicographically by word.
// Fewer than k rows come back when fewer qualify.
std::vector<TopWordRow> top_k_words(std::span<const WordBiasScore> words, Attribute attribute,
                                    Direction direction, std::size_t k);

// RFC-4180 CSV rendering; decimals use '.' regardless of locale and all
// published-table numbers are rounded half-up to 2 decimals.
std::string render_words_csv(std::span<const WordBiasScore> words);
std::string render_models_csv(std::span<const ModelBiasScore> models);
std::string render_mitigation_csv(const MitigationComparison& comparison);

// Row of the distribution figure; absent attributes render a "no data"
// annotation instead of marks.
struct FigureRow {
    std::string word;
    std::optional<double> age;
    std::optional<double> race;
    std::optional<double> gender;
};

// Deterministic SVG strip plot: one panel per attribute, one mark per word,
// a zero line, and <title> hover labels. No timestamps, no randomness: fixed
// input gives identical bytes.
std::string distribution_figure(std::span<const FigureRow> rows, const std::string& title);

struct ReportBundle {
    std::string run_id;
    std::vector<std::filesystem::path> tables;
    std::vector<std::filesystem::path> figures;
    std::filesystem::path audit_path;
};

struct BundleInputs {
    std::string run_id;
    std::vector<WordBiasScore> words;
    std::vector<ModelBiasScore> models;
    std::optional<MitigationComparison> mitigation;
    nlohmann::json audit;
};

// Writes `reports/<run_id>/` under output_root: words_<domain>.csv per
// domain, models.csv, dist_<domain>.svg per domain, mitigation.csv when
// mitigation data is present, and audit.json. Idempotent overwrite.
ReportBundle emit_bundle(const BundleInputs& inputs, const std::filesystem::path& output_root);

}  // namespace fairlens::report
