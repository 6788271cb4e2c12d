#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairlens/common.hpp"
#include "fairlens/corpus.hpp"
#include "fairlens/image.hpp"
#include "fairlens/vision.hpp"

namespace fairlens::backend {

enum class BackendKind { Http, Mock, SyntheticBias };
enum class GenStatus { Ok, Invalid, Failed };

std::string_view to_string(BackendKind value);
std::string_view to_string(GenStatus value);
BackendKind parse_backend_kind(std::string_view text);
GenStatus parse_gen_status(std::string_view text);

constexpr int kDefaultMaxAttempts = 4;

// One image-edit request: a (seed, prompt) pair plus pass-through sampling
// parameters. `attempt` perturbs the backend's sampling seed on regeneration
// and is deliberately excluded from the fingerprint.
struct GenerationRequest {
    corpus::SeedImage seed;
    corpus::Prompt prompt;
    std::string model_id;
    nlohmann::json params = nlohmann::json::object();  // scalar values only
    int attempt = 0;
    std::optional<std::string> mitigation_suffix;

    // prompt text, with ", <suffix>" appended for mitigation runs.
    std::string effective_prompt() const;

    // Stable hash of (seed.id, prompt.id, model_id, canonicalized params,
    // mitigation_suffix). Canonicalization serializes params with sorted keys
    // so map ordering is irrelevant.
    std::string fingerprint() const;
};

struct GenerationRecord {
    std::string fingerprint;
    std::filesystem::path image_path;
    BackendKind backend_kind = BackendKind::Mock;
    std::uint64_t wall_time_ms = 0;
    GenStatus status = GenStatus::Failed;

    // Join keys and provenance carried through the run manifest.
    std::string seed_id;
    std::string prompt_id;
    std::string word;
    corpus::Domain domain = corpus::Domain::Activity;
    std::string model_id;
    int attempt = 0;
    bool cache_hit = false;
    std::string error;

    nlohmann::json to_json() const;
    static GenerationRecord from_json(const nlohmann::json& doc);
};

// What a backend returns before the cache persists it: pixels plus an
// optional face sidecar (written as `<image>.faces.json` for the stub
// analyzer path).
struct RenderResult {
    Image image;
    std::optional<nlohmann::json> faces_sidecar;
};

class ImageBackend {
public:
    virtual ~ImageBackend() = default;
    virtual RenderResult render(const GenerationRequest& request) = 0;
    virtual BackendKind kind() const = 0;
};

// In-process backend for tests and dry runs. Without a script it echoes the
// seed image (and its sidecar when present); a script supplies one outcome
// per render call.
class MockBackend final : public ImageBackend {
public:
    using ScriptStep = std::function<RenderResult(const GenerationRequest&)>;

    RenderResult render(const GenerationRequest& request) override;
    BackendKind kind() const override { return BackendKind::Mock; }

    void push_script(ScriptStep step);
    int render_count() const { return render_count_.load(); }

private:
    std::mutex mutex_;
    std::deque<ScriptStep> script_;
    std::atomic<int> render_count_{0};
};

// Known demographic shift injected per prompt word; the detection oracle for
// end-to-end tests.
struct SyntheticRule {
    double gender_flip_prob = 0.0;  // in [0, 1]
    double age_shift_years = 0.0;
    double gray_shift = 0.0;  // added to every channel inside the face hull
};

struct SyntheticBiasProfile {
    std::map<std::string, SyntheticRule> rules;  // keyed by prompt word
    std::uint64_t rng_seed = 0;

    void validate() const;
    static SyntheticBiasProfile from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
};

// Deterministic generator: output is a pure function of (seed image bytes,
// word rules, rng_seed, attempt). The gray shift is burned into the pixels
// inside each face hull; gender flips and age shifts are applied to the face
// sidecar consumed by the stub analyzer.
class SyntheticBiasBackend final : public ImageBackend {
public:
    explicit SyntheticBiasBackend(SyntheticBiasProfile profile);
    RenderResult render(const GenerationRequest& request) override;
    BackendKind kind() const override { return BackendKind::SyntheticBias; }

private:
    SyntheticBiasProfile profile_;
};

// Generic template-driven HTTP image-edit client. Vendor quirks live in this
// config, not in code.
struct HttpBackendConfig {
    std::string base_url;
    std::string path = "/v1/edit";
    std::string encoding = "json_base64";  // or "multipart"
    std::string image_field = "image";
    std::string prompt_field = "prompt";
    std::string seed_field;  // optional; receives the per-attempt sampling seed
    nlohmann::json static_fields = nlohmann::json::object();

    std::string response_mode = "b64_json";  // "b64_json" | "url" | "binary"
    std::string response_path = "/image";    // JSON pointer for b64_json/url

    std::string auth_header;
    std::string auth_env_var;
    std::string refusal_marker;

    int timeout_ms = 30000;
    int max_retries = 5;        // bounded exponential backoff on transient failures
    int retry_base_ms = 250;
    double rate_limit_rps = 1.0;  // token bucket; <= 0 disables
};

// Token bucket: capacity `burst`, refilled at `rps` tokens per second.
class TokenBucket {
public:
    TokenBucket(double rps, double burst);
    void acquire();  // blocks until a token is available

private:
    std::mutex mutex_;
    double rps_;
    double burst_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
};

class HttpImageBackend final : public ImageBackend {
public:
    HttpImageBackend(HttpBackendConfig config, std::uint64_t jitter_seed);
    RenderResult render(const GenerationRequest& request) override;
    BackendKind kind() const override { return BackendKind::Http; }

private:
    HttpBackendConfig config_;
    TokenBucket bucket_;
    std::mutex rng_mutex_;
    PortableRng jitter_rng_;
};

// Disk cache keyed by fingerprint: `<root>/<model_id>/<fp>.png` plus
// `<fp>.meta.json` (and `<fp>.png.faces.json` when the backend supplies a
// sidecar). The meta file is renamed into place last, so a record exists iff
// its meta parses; interrupted writes never count as completed.
class Generator {
public:
    Generator(std::filesystem::path cache_root, std::shared_ptr<ImageBackend> backend);

    // Cache-aware: an existing record for the fingerprint is returned without
    // calling the backend. Undecodable cached artifacts raise CacheCorruption.
    GenerationRecord generate(const GenerationRequest& request);

    // Always renders (used by regeneration attempts); overwrites the cache
    // entry for the fingerprint.
    GenerationRecord force_generate(const GenerationRequest& request);

    std::optional<GenerationRecord> cached(const GenerationRequest& request) const;

    // Rewrites the meta record (e.g. to mark exhausted regeneration Invalid).
    void update_record(const GenerationRecord& record);

    const std::filesystem::path& cache_root() const { return cache_root_; }
    ImageBackend& backend() { return *backend_; }

private:
    std::filesystem::path meta_path(const std::string& model_id, const std::string& fp) const;
    std::filesystem::path image_path(const std::string& model_id, const std::string& fp) const;
    GenerationRecord persist(const GenerationRequest& request, const RenderResult& rendered,
                             std::uint64_t wall_ms);

    std::filesystem::path cache_root_;
    std::shared_ptr<ImageBackend> backend_;
    mutable std::mutex io_mutex_;
};

using AssessFn = std::function<vision::ImageProperties(const std::filesystem::path&)>;
using ValidityCheck = std::function<bool(const vision::ImageProperties&)>;

// Regenerates until the assessed properties pass validity_check, bumping
// `attempt` each time (which perturbs the backend's sampling seed). After
// max_attempts failures the record is persisted with status Invalid.
GenerationRecord regenerate_until_valid(Generator& generator, GenerationRequest request,
                                        const AssessFn& assess, const ValidityCheck& validity,
                                        int max_attempts);

struct RunMatrixOptions {
    int concurrency = 1;
    double failure_ceiling = 0.25;  // abort when failed/attempted exceeds this
    int failure_min_sample = 10;    // after at least this many attempts
    std::uint64_t stop_after_new = 0;  // 0 = unlimited; cap on backend renders
    std::filesystem::path manifest_path;  // append-only JSONL; empty = skip
    // When set, every generation goes through regenerate_until_valid.
    AssessFn assess;
    ValidityCheck validity;
    int max_attempts = kDefaultMaxAttempts;
    std::function<void(std::size_t done, std::size_t total)> progress;
};

// Runs the full |seeds| x |prompts| matrix. Failures are recorded rather than
// fatal until the failure-rate ceiling trips (ExcessiveFailureRate). Records
// are returned in deterministic (seed-major) order regardless of concurrency.
std::vector<GenerationRecord> run_matrix(Generator& generator, const corpus::SeedSet& seeds,
                                         const corpus::PromptList& prompts,
                                         const nlohmann::json& params,
                                         const std::optional<std::string>& mitigation_suffix,
                                         const std::string& model_id,
                                         const RunMatrixOptions& options);

// Backend factory from config JSON {"kind": "http"|"mock"|"synthetic_bias", ...}.
// `run_rng_seed` feeds retry jitter only; generation determinism never
// depends on it.
std::shared_ptr<ImageBackend> make_backend(const nlohmann::json& config,
                                           std::uint64_t run_rng_seed);

// Base64 helpers shared with the HTTP client and mock servers.
std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace fairlens::backend
