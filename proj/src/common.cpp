#include "fairlens/common.hpp"

#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fairlens {

namespace fs = std::filesystem;

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingFile: return "MissingFile";
        case ErrorCode::MalformedManifest: return "MalformedManifest";
        case ErrorCode::GroupImbalance: return "GroupImbalance";
        case ErrorCode::UnreadableImage: return "UnreadableImage";
        case ErrorCode::InsufficientGroupCandidates: return "InsufficientGroupCandidates";
        case ErrorCode::EmptyWord: return "EmptyWord";
        case ErrorCode::DuplicateWordInDomain: return "DuplicateWordInDomain";
        case ErrorCode::BackendTimeout: return "BackendTimeout";
        case ErrorCode::BackendRejected: return "BackendRejected";
        case ErrorCode::SafetyRefusal: return "SafetyRefusal";
        case ErrorCode::CacheCorruption: return "CacheCorruption";
        case ErrorCode::ExcessiveFailureRate: return "ExcessiveFailureRate";
        case ErrorCode::AnalyzerUnavailable: return "AnalyzerUnavailable";
        case ErrorCode::AnalyzerMalformedResponse: return "AnalyzerMalformedResponse";
        case ErrorCode::DegenerateLandmarks: return "DegenerateLandmarks";
        case ErrorCode::EmptyMask: return "EmptyMask";
        case ErrorCode::EmptyMaskAfterFilter: return "EmptyMaskAfterFilter";
        case ErrorCode::InvalidGenderState: return "InvalidGenderState";
        case ErrorCode::NoValidPairs: return "NoValidPairs";
        case ErrorCode::NoWords: return "NoWords";
        case ErrorCode::MissingCell: return "MissingCell";
        case ErrorCode::InsufficientBandPopulation: return "InsufficientBandPopulation";
        case ErrorCode::KeyMismatch: return "KeyMismatch";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
        case ErrorCode::StageDependencyMissing: return "StageDependencyMissing";
    }
    return "UnknownError";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void raise(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string to_hex16(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

std::string fingerprint_fields(const std::vector<std::string_view>& fields) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& f : fields) {
        std::array<char, 8> len{};
        std::uint64_t n = f.size();
        for (int i = 0; i < 8; ++i) {
            len[static_cast<std::size_t>(i)] = static_cast<char>((n >> (8 * i)) & 0xff);
        }
        h = fnv1a64(std::string_view(len.data(), len.size()), h);
        h = fnv1a64(f, h);
    }
    return to_hex16(h);
}

std::uint64_t PortableRng::bounded(std::uint64_t n) {
    if (n == 0) {
        raise(ErrorCode::ConfigInvalid, "bounded draw from empty range");
    }
    // Rejection against the next power of two; unbiased and portable.
    std::uint64_t mask = n - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    for (;;) {
        std::uint64_t v = engine_() & mask;
        if (v < n) return v;
    }
}

double PortableRng::next_unit() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::vector<std::size_t> sample_indices_without_replacement(std::size_t count,
                                                            std::size_t n,
                                                            PortableRng& rng) {
    if (count > n) {
        raise(ErrorCode::InsufficientGroupCandidates,
              "requested " + std::to_string(count) + " from population " + std::to_string(n));
    }
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.bounded(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    return pool;
}

double round_half_up_2dp(double value) {
    double scaled = value * 100.0;
    double r = std::trunc(scaled + std::copysign(0.5, scaled));
    return r / 100.0;
}

std::string format_2dp(double value) {
    double scaled = value * 100.0;
    long long cents = static_cast<long long>(std::trunc(scaled + std::copysign(0.5, scaled)));
    bool negative = cents < 0;
    unsigned long long a = negative ? static_cast<unsigned long long>(-cents)
                                    : static_cast<unsigned long long>(cents);
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s%llu.%02llu", negative ? "-" : "", a / 100, a % 100);
    return buf;
}

std::string trim(std::string_view text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    return std::string(text.substr(begin, end - begin));
}

std::string to_lower_ascii(std::string_view text) {
    std::string out(text);
    for (char& c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(ErrorCode::MissingFile, path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const fs::path& path, std::string_view contents) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        raise(ErrorCode::IoFailure, "cannot open for writing: " + path.string());
    }
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) {
        raise(ErrorCode::IoFailure, "short write: " + path.string());
    }
}

void atomic_write_file(const fs::path& path, std::string_view contents) {
    fs::path tmp = path;
    tmp += ".tmp";
    write_text_file(tmp, contents);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        raise(ErrorCode::IoFailure, "rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
    }
}

void append_jsonl(const fs::path& path, const json_t& row) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) {
        raise(ErrorCode::IoFailure, "cannot append: " + path.string());
    }
    out << row.dump() << '\n';
    if (!out) {
        raise(ErrorCode::IoFailure, "short append: " + path.string());
    }
}

std::vector<json_t> read_jsonl(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(ErrorCode::MissingFile, path.string());
    }
    std::vector<json_t> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        rows.push_back(json_t::parse(line));
    }
    return rows;
}

std::string iso8601_utc_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

}  // namespace fairlens
