#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace fairlens {

using json_t = nlohmann::json;

// Every failure class the library can raise. The CLI maps these onto
// process exit codes; tests match on them.
enum class ErrorCode {
    MissingFile,
    MalformedManifest,
    GroupImbalance,
    UnreadableImage,
    InsufficientGroupCandidates,
    EmptyWord,
    DuplicateWordInDomain,
    BackendTimeout,
    BackendRejected,
    SafetyRefusal,
    CacheCorruption,
    ExcessiveFailureRate,
    AnalyzerUnavailable,
    AnalyzerMalformedResponse,
    DegenerateLandmarks,
    EmptyMask,
    EmptyMaskAfterFilter,
    InvalidGenderState,
    NoValidPairs,
    NoWords,
    MissingCell,
    InsufficientBandPopulation,
    KeyMismatch,
    IoFailure,
    ConfigInvalid,
    StageDependencyMissing,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& message);

// --- hashing -----------------------------------------------------------

// 64-bit FNV-1a. Used for request fingerprints and config hashes; stable
// across platforms and runs.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull);
std::string to_hex16(std::uint64_t value);

// Hash of multiple fields with length prefixes so that ("ab","c") and
// ("a","bc") never collide.
std::string fingerprint_fields(const std::vector<std::string_view>& fields);

// --- portable RNG ------------------------------------------------------

// Seedable generator with a fully specified cross-platform draw sequence:
// std::mt19937_64 raw output plus power-of-two rejection for bounded draws
// (std::uniform_int_distribution is implementation-defined, so it is not
// used anywhere results must replay).
class PortableRng {
public:
    explicit PortableRng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, n). n must be > 0.
    std::uint64_t bounded(std::uint64_t n);

    // Uniform in [0, 1) with 53 random bits.
    double next_unit();

private:
    std::mt19937_64 engine_;
};

// Draws `count` distinct indices uniformly from [0, n) via a partial
// Fisher-Yates pass, consuming one bounded() draw per selection.
std::vector<std::size_t> sample_indices_without_replacement(std::size_t count,
                                                            std::size_t n,
                                                            PortableRng& rng);

// --- numeric formatting -------------------------------------------------

// Half-up (away from zero) rounding to 2 decimals, the convention used for
// all published-table rendering. Internal values stay full precision.
double round_half_up_2dp(double value);

// Locale-free fixed rendering of round_half_up_2dp(value), e.g. "0.65", "-1.00".
std::string format_2dp(double value);

// --- small string/file helpers ------------------------------------------

std::string trim(std::string_view text);
std::string to_lower_ascii(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view contents);
// Write to a sibling temp file, then rename. The rename is the commit point.
void atomic_write_file(const std::filesystem::path& path, std::string_view contents);

// --- JSONL ---------------------------------------------------------------

void append_jsonl(const std::filesystem::path& path, const json_t& row);
std::vector<json_t> read_jsonl(const std::filesystem::path& path);

std::string iso8601_utc_now();

}  // namespace fairlens
