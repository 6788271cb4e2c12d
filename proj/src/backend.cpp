#include "fairlens/backend.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <thread>

#include <httplib.h>

namespace fairlens::backend {

namespace fs = std::filesystem;

std::string_view to_string(BackendKind value) {
    switch (value) {
        case BackendKind::Http: return "http";
        case BackendKind::Mock: return "mock";
        case BackendKind::SyntheticBias: return "synthetic_bias";
    }
    return "?";
}

std::string_view to_string(GenStatus value) {
    switch (value) {
        case GenStatus::Ok: return "ok";
        case GenStatus::Invalid: return "invalid";
        case GenStatus::Failed: return "failed";
    }
    return "?";
}

BackendKind parse_backend_kind(std::string_view text) {
    if (text == "http") return BackendKind::Http;
    if (text == "mock") return BackendKind::Mock;
    if (text == "synthetic_bias") return BackendKind::SyntheticBias;
    raise(ErrorCode::ConfigInvalid, "unknown backend kind '" + std::string(text) + "'");
}

GenStatus parse_gen_status(std::string_view text) {
    if (text == "ok") return GenStatus::Ok;
    if (text == "invalid") return GenStatus::Invalid;
    if (text == "failed") return GenStatus::Failed;
    raise(ErrorCode::ConfigInvalid, "unknown generation status '" + std::string(text) + "'");
}

std::string GenerationRequest::effective_prompt() const {
    if (mitigation_suffix && !mitigation_suffix->empty()) {
        return prompt.text + ", " + *mitigation_suffix;
    }
    return prompt.text;
}

std::string GenerationRequest::fingerprint() const {
    // nlohmann objects iterate in sorted key order, so dump() is canonical.
    std::string canonical_params = params.dump();
    return fingerprint_fields({seed.id, prompt.id, model_id, canonical_params,
                               mitigation_suffix ? std::string_view(*mitigation_suffix)
                                                 : std::string_view()});
}

nlohmann::json GenerationRecord::to_json() const {
    return {{"fingerprint", fingerprint},
            {"image_path", image_path.generic_string()},
            {"backend_kind", std::string(to_string(backend_kind))},
            {"wall_time_ms", wall_time_ms},
            {"status", std::string(to_string(status))},
            {"seed_id", seed_id},
            {"prompt_id", prompt_id},
            {"word", word},
            {"domain", std::string(corpus::to_string(domain))},
            {"model_id", model_id},
            {"attempt", attempt},
            {"cache_hit", cache_hit},
            {"error", error}};
}

GenerationRecord GenerationRecord::from_json(const nlohmann::json& doc) {
    GenerationRecord rec;
    rec.fingerprint = doc.at("fingerprint").get<std::string>();
    rec.image_path = fs::path(doc.at("image_path").get<std::string>());
    rec.backend_kind = parse_backend_kind(doc.at("backend_kind").get<std::string>());
    rec.wall_time_ms = doc.at("wall_time_ms").get<std::uint64_t>();
    rec.status = parse_gen_status(doc.at("status").get<std::string>());
    rec.seed_id = doc.at("seed_id").get<std::string>();
    rec.prompt_id = doc.at("prompt_id").get<std::string>();
    rec.word = doc.at("word").get<std::string>();
    rec.domain = corpus::parse_domain(doc.at("domain").get<std::string>());
    rec.model_id = doc.at("model_id").get<std::string>();
    rec.attempt = doc.at("attempt").get<int>();
    rec.cache_hit = doc.value("cache_hit", false);
    rec.error = doc.value("error", std::string());
    return rec;
}

// --- mock ----------------------------------------------------------------

RenderResult MockBackend::render(const GenerationRequest& request) {
    render_count_.fetch_add(1);
    ScriptStep step;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        if (!script_.empty()) {
            step = std::move(script_.front());
            script_.pop_front();
        }
    }
    if (step) return step(request);

    RenderResult out;
    out.image = load_png(request.seed.image_path);
    fs::path sidecar = request.seed.image_path;
    sidecar += ".faces.json";
    if (fs::exists(sidecar)) {
        out.faces_sidecar = nlohmann::json::parse(read_text_file(sidecar));
    }
    return out;
}

void MockBackend::push_script(ScriptStep step) {
    std::lock_guard<std::mutex> lock(mutex_);
    script_.push_back(std::move(step));
}

// --- synthetic bias -------------------------------------------------------

void SyntheticBiasProfile::validate() const {
    for (const auto& [word, rule] : rules) {
        if (rule.gender_flip_prob < 0.0 || rule.gender_flip_prob > 1.0) {
            raise(ErrorCode::ConfigInvalid,
                  "gender_flip_prob out of [0,1] for word '" + word + "'");
        }
    }
}

SyntheticBiasProfile SyntheticBiasProfile::from_json(const nlohmann::json& doc) {
    SyntheticBiasProfile profile;
    profile.rng_seed = doc.value("rng_seed", 0ull);
    if (doc.contains("rules")) {
        for (const auto& [word, rule] : doc.at("rules").items()) {
            SyntheticRule r;
            r.gender_flip_prob = rule.value("gender_flip_prob", 0.0);
            r.age_shift_years = rule.value("age_shift_years", 0.0);
            r.gray_shift = rule.value("gray_shift", 0.0);
            profile.rules[word] = r;
        }
    }
    profile.validate();
    return profile;
}

nlohmann::json SyntheticBiasProfile::to_json() const {
    nlohmann::json rules_doc = nlohmann::json::object();
    for (const auto& [word, rule] : rules) {
        rules_doc[word] = {{"gender_flip_prob", rule.gender_flip_prob},
                           {"age_shift_years", rule.age_shift_years},
                           {"gray_shift", rule.gray_shift}};
    }
    return {{"rng_seed", rng_seed}, {"rules", rules_doc}};
}

SyntheticBiasBackend::SyntheticBiasBackend(SyntheticBiasProfile profile)
    : profile_(std::move(profile)) {
    profile_.validate();
}

RenderResult SyntheticBiasBackend::render(const GenerationRequest& request) {
    std::string seed_bytes;
    try {
        seed_bytes = read_text_file(request.seed.image_path);
    } catch (const Error&) {
        raise(ErrorCode::BackendRejected,
              "synthetic backend cannot read seed " + request.seed.image_path.string());
    }
    fs::path sidecar_path = request.seed.image_path;
    sidecar_path += ".faces.json";
    if (!fs::exists(sidecar_path)) {
        raise(ErrorCode::BackendRejected,
              "synthetic backend needs a face sidecar for " + request.seed.image_path.string());
    }
    nlohmann::json sidecar = nlohmann::json::parse(read_text_file(sidecar_path));

    SyntheticRule rule;
    if (auto it = profile_.rules.find(request.prompt.word); it != profile_.rules.end()) {
        rule = it->second;
    }

    // Flip decision: a pure function of (seed bytes, word, rng_seed, attempt).
    std::string flip_key = to_hex16(profile_.rng_seed) + "|" + request.prompt.word + "|" +
                           to_hex16(fnv1a64(seed_bytes)) + "|" + std::to_string(request.attempt);
    double flip_draw = static_cast<double>(fnv1a64(flip_key) >> 11) * 0x1.0p-53;
    bool flip_gender = flip_draw < rule.gender_flip_prob;

    RenderResult out;
    out.image = decode_png(seed_bytes);

    long long shift = std::llround(rule.gray_shift);
    if (shift != 0 && sidecar.contains("faces")) {
        auto faces = vision::parse_analyzer_response(sidecar, out.image);
        for (const auto& face : faces) {
            auto hull = vision::face_hull_mask(face.landmarks, out.image.width, out.image.height);
            for (int y = 0; y < out.image.height; ++y) {
                for (int x = 0; x < out.image.width; ++x) {
                    if (!hull.at(x, y)) continue;
                    std::uint8_t* px = out.image.pixel(x, y);
                    for (int c = 0; c < 3; ++c) {
                        long long v = static_cast<long long>(px[c]) + shift;
                        px[c] = static_cast<std::uint8_t>(std::clamp<long long>(v, 0, 255));
                    }
                }
            }
        }
    }

    nlohmann::json out_sidecar = sidecar;
    if (out_sidecar.contains("faces")) {
        for (auto& face : out_sidecar["faces"]) {
            if (flip_gender) {
                std::string g = face.value("gender", "Male");
                face["gender"] = (g == "Male") ? "Female" : "Male";
            }
            double age = face.value("age", 0.0) + rule.age_shift_years;
            face["age"] = std::max(0.0, age);
        }
    }
    out.faces_sidecar = out_sidecar;
    return out;
}

// --- HTTP -----------------------------------------------------------------

TokenBucket::TokenBucket(double rps, double burst)
    : rps_(rps), burst_(burst), tokens_(burst), last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
    if (rps_ <= 0.0) return;
    for (;;) {
        double wait_s = 0.0;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto now = std::chrono::steady_clock::now();
            double elapsed = std::chrono::duration<double>(now - last_).count();
            last_ = now;
            tokens_ = std::min(burst_, tokens_ + elapsed * rps_);
            if (tokens_ >= 1.0) {
                tokens_ -= 1.0;
                return;
            }
            wait_s = (1.0 - tokens_) / rps_;
        }
        std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
    }
}

namespace {

const char kBase64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 3 <= bytes.size()) {
        std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                          (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                          static_cast<unsigned char>(bytes[i + 2]);
        out += kBase64Alphabet[(v >> 18) & 63];
        out += kBase64Alphabet[(v >> 12) & 63];
        out += kBase64Alphabet[(v >> 6) & 63];
        out += kBase64Alphabet[v & 63];
        i += 3;
    }
    std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
        out += kBase64Alphabet[(v >> 18) & 63];
        out += kBase64Alphabet[(v >> 12) & 63];
        out += "==";
    } else if (rest == 2) {
        std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                          (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out += kBase64Alphabet[(v >> 18) & 63];
        out += kBase64Alphabet[(v >> 12) & 63];
        out += kBase64Alphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::string out;
    int buffer = 0, bits = 0;
    for (char c : text) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        int v = value_of(c);
        if (v < 0) {
            raise(ErrorCode::BackendRejected, "invalid base64 payload");
        }
        buffer = (buffer << 6) | v;
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out += static_cast<char>((buffer >> bits) & 0xff);
        }
    }
    return out;
}

HttpImageBackend::HttpImageBackend(HttpBackendConfig config, std::uint64_t jitter_seed)
    : config_(std::move(config)),
      bucket_(config_.rate_limit_rps, std::max(1.0, config_.rate_limit_rps)),
      jitter_rng_(jitter_seed) {}

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        raise(ErrorCode::BackendRejected, "expected absolute URL, got '" + url + "'");
    }
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string body_excerpt(const std::string& body) {
    std::string ex = body.substr(0, 200);
    for (char& c : ex) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return ex;
}

std::string scalar_to_string(const nlohmann::json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace

RenderResult HttpImageBackend::render(const GenerationRequest& request) {
    std::string seed_bytes = read_text_file(request.seed.image_path);
    std::uint64_t sampling_seed =
        fnv1a64(request.fingerprint() + ":" + std::to_string(request.attempt)) & 0x7fffffffull;

    httplib::Headers headers;
    if (!config_.auth_header.empty() && !config_.auth_env_var.empty()) {
        const char* secret = std::getenv(config_.auth_env_var.c_str());
        if (!secret) {
            raise(ErrorCode::ConfigInvalid, "backend auth env var not set: " + config_.auth_env_var);
        }
        headers.emplace(config_.auth_header, secret);
    }

    bool last_was_transport = false;
    int last_status = 0;
    std::string last_body;

    for (int try_no = 0; try_no < std::max(1, config_.max_retries); ++try_no) {
        if (try_no > 0) {
            double jitter;
            {
                std::lock_guard<std::mutex> lock(rng_mutex_);
                jitter = 0.5 + 0.5 * jitter_rng_.next_unit();
            }
            double delay_ms = std::min(10000.0, config_.retry_base_ms * std::pow(2.0, try_no - 1) * jitter);
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay_ms));
        }
        bucket_.acquire();

        httplib::Client client(config_.base_url);
        client.set_connection_timeout(0, config_.timeout_ms * 1000);
        client.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);

        httplib::Result res;
        if (config_.encoding == "multipart") {
            httplib::MultipartFormDataItems items;
            items.push_back({config_.image_field, seed_bytes, "seed.png", "image/png"});
            items.push_back({config_.prompt_field, request.effective_prompt(), "", ""});
            for (const auto& [k, v] : config_.static_fields.items()) {
                items.push_back({k, scalar_to_string(v), "", ""});
            }
            for (const auto& [k, v] : request.params.items()) {
                items.push_back({k, scalar_to_string(v), "", ""});
            }
            if (!config_.seed_field.empty()) {
                items.push_back({config_.seed_field, std::to_string(sampling_seed), "", ""});
            }
            res = client.Post(config_.path, headers, items);
        } else if (config_.encoding == "json_base64") {
            nlohmann::json body = config_.static_fields;
            for (const auto& [k, v] : request.params.items()) body[k] = v;
            body[config_.image_field] = base64_encode(seed_bytes);
            body[config_.prompt_field] = request.effective_prompt();
            if (!config_.seed_field.empty()) body[config_.seed_field] = sampling_seed;
            res = client.Post(config_.path, headers, body.dump(), "application/json");
        } else {
            raise(ErrorCode::ConfigInvalid, "unknown request encoding '" + config_.encoding + "'");
        }

        if (!res) {
            last_was_transport = true;
            continue;
        }
        last_was_transport = false;
        last_status = res->status;
        last_body = res->body;

        if (!config_.refusal_marker.empty() &&
            res->body.find(config_.refusal_marker) != std::string::npos) {
            raise(ErrorCode::SafetyRefusal, "backend refusal: " + body_excerpt(res->body));
        }
        if (res->status == 429 || res->status >= 500) {
            continue;  // transient
        }
        if (res->status != 200) {
            raise(ErrorCode::BackendRejected,
                  "HTTP " + std::to_string(res->status) + ": " + body_excerpt(res->body));
        }

        // Extract the image per the configured response shape.
        std::string image_bytes;
        if (config_.response_mode == "binary") {
            image_bytes = res->body;
        } else {
            nlohmann::json doc;
            try {
                doc = nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception& e) {
                raise(ErrorCode::BackendRejected, std::string("non-JSON response: ") + e.what());
            }
            nlohmann::json field;
            try {
                field = doc.at(nlohmann::json::json_pointer(config_.response_path));
            } catch (const nlohmann::json::exception&) {
                raise(ErrorCode::BackendRejected,
                      "response_path " + config_.response_path + " not found");
            }
            if (!field.is_string()) {
                raise(ErrorCode::BackendRejected, "response image field is not a string");
            }
            if (config_.response_mode == "b64_json") {
                image_bytes = base64_decode(field.get<std::string>());
            } else if (config_.response_mode == "url") {
                auto url = split_url(field.get<std::string>());
                httplib::Client fetch(url.origin);
                fetch.set_read_timeout(config_.timeout_ms / 1000,
                                       (config_.timeout_ms % 1000) * 1000);
                auto img_res = fetch.Get(url.path);
                if (!img_res || img_res->status != 200) {
                    raise(ErrorCode::BackendRejected, "image URL fetch failed: " +
                                                          field.get<std::string>());
                }
                image_bytes = img_res->body;
            } else {
                raise(ErrorCode::ConfigInvalid,
                      "unknown response mode '" + config_.response_mode + "'");
            }
        }
        RenderResult out;
        try {
            out.image = decode_png(image_bytes);
        } catch (const Error&) {
            raise(ErrorCode::BackendRejected, "backend returned undecodable image bytes");
        }
        return out;
    }

    if (last_was_transport) {
        raise(ErrorCode::BackendTimeout,
              config_.base_url + config_.path + " unreachable after " +
                  std::to_string(config_.max_retries) + " tries");
    }
    raise(ErrorCode::BackendRejected, "HTTP " + std::to_string(last_status) +
                                          " after retries: " + body_excerpt(last_body));
}

// --- cache / generator ------------------------------------------------------

Generator::Generator(fs::path cache_root, std::shared_ptr<ImageBackend> backend)
    : cache_root_(std::move(cache_root)), backend_(std::move(backend)) {}

fs::path Generator::meta_path(const std::string& model_id, const std::string& fp) const {
    return cache_root_ / model_id / (fp + ".meta.json");
}

fs::path Generator::image_path(const std::string& model_id, const std::string& fp) const {
    return cache_root_ / model_id / (fp + ".png");
}

std::optional<GenerationRecord> Generator::cached(const GenerationRequest& request) const {
    std::string fp = request.fingerprint();
    fs::path meta = meta_path(request.model_id, fp);
    if (!fs::exists(meta)) return std::nullopt;
    GenerationRecord rec;
    try {
        rec = GenerationRecord::from_json(nlohmann::json::parse(read_text_file(meta)));
    } catch (const std::exception& e) {
        raise(ErrorCode::CacheCorruption, meta.string() + ": " + e.what());
    }
    if (rec.status != GenStatus::Failed) {
        try {
            load_png(rec.image_path);
        } catch (const Error&) {
            raise(ErrorCode::CacheCorruption,
                  "cached image undecodable: " + rec.image_path.string());
        }
    }
    rec.cache_hit = true;
    return rec;
}

GenerationRecord Generator::persist(const GenerationRequest& request, const RenderResult& rendered,
                                    std::uint64_t wall_ms) {
    std::string fp = request.fingerprint();
    GenerationRecord rec;
    rec.fingerprint = fp;
    rec.image_path = image_path(request.model_id, fp);
    rec.backend_kind = backend_->kind();
    rec.wall_time_ms = wall_ms;
    rec.status = GenStatus::Ok;
    rec.seed_id = request.seed.id;
    rec.prompt_id = request.prompt.id;
    rec.word = request.prompt.word;
    rec.domain = request.prompt.domain;
    rec.model_id = request.model_id;
    rec.attempt = request.attempt;

    std::lock_guard<std::mutex> lock(io_mutex_);
    std::error_code ec;
    fs::create_directories(rec.image_path.parent_path(), ec);
    atomic_write_file(rec.image_path, encode_png(rendered.image));
    if (rendered.faces_sidecar) {
        fs::path sidecar = rec.image_path;
        sidecar += ".faces.json";
        atomic_write_file(sidecar, rendered.faces_sidecar->dump(2));
    }
    // Meta goes last: its rename is the cache commit point.
    atomic_write_file(meta_path(request.model_id, fp), rec.to_json().dump(2));
    return rec;
}

GenerationRecord Generator::generate(const GenerationRequest& request) {
    if (auto hit = cached(request)) {
        return *hit;
    }
    return force_generate(request);
}

GenerationRecord Generator::force_generate(const GenerationRequest& request) {
    auto start = std::chrono::steady_clock::now();
    RenderResult rendered = backend_->render(request);
    auto wall_ms = static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                                  std::chrono::steady_clock::now() - start)
                                                  .count());
    return persist(request, rendered, wall_ms);
}

void Generator::update_record(const GenerationRecord& record) {
    std::lock_guard<std::mutex> lock(io_mutex_);
    atomic_write_file(meta_path(record.model_id, record.fingerprint), record.to_json().dump(2));
}

GenerationRecord regenerate_until_valid(Generator& generator, GenerationRequest request,
                                        const AssessFn& assess, const ValidityCheck& validity,
                                        int max_attempts) {
    if (max_attempts < 1) {
        raise(ErrorCode::ConfigInvalid, "max_attempts must be >= 1");
    }
    // A prior run that already exhausted its attempts stays Invalid.
    if (auto prior = generator.cached(request); prior && prior->status == GenStatus::Invalid) {
        return *prior;
    }
    GenerationRecord rec;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        request.attempt = attempt;
        rec = attempt == 0 ? generator.generate(request) : generator.force_generate(request);
        vision::ImageProperties props = assess(rec.image_path);
        if (validity(props)) {
            return rec;
        }
    }
    rec.status = GenStatus::Invalid;
    generator.update_record(rec);
    return rec;
}

std::vector<GenerationRecord> run_matrix(Generator& generator, const corpus::SeedSet& seeds,
                                         const corpus::PromptList& prompts,
                                         const nlohmann::json& params,
                                         const std::optional<std::string>& mitigation_suffix,
                                         const std::string& model_id,
                                         const RunMatrixOptions& options) {
    if (seeds.seeds.empty() || prompts.prompts.empty()) {
        raise(ErrorCode::ConfigInvalid, "run_matrix needs non-empty seeds and prompts");
    }
    const std::size_t n_prompts = prompts.prompts.size();
    const std::size_t total = seeds.seeds.size() * n_prompts;

    std::vector<std::optional<GenerationRecord>> slots(total);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::atomic<std::size_t> failed{0};
    std::atomic<bool> abort_flag{false};
    std::mutex emit_mutex;
    std::size_t new_renders = 0;  // guarded by emit_mutex

    auto worker = [&]() {
        for (;;) {
            if (abort_flag.load()) return;
            std::size_t i = next.fetch_add(1);
            if (i >= total) return;
            const auto& seed = seeds.seeds[i / n_prompts];
            const auto& prompt = prompts.prompts[i % n_prompts];

            GenerationRequest request;
            request.seed = seed;
            request.prompt = prompt;
            request.model_id = model_id;
            request.params = params;
            request.mitigation_suffix = mitigation_suffix;

            // Honor the new-generation cap (used to stop a run mid-matrix).
            bool is_cached = false;
            try {
                is_cached = generator.cached(request).has_value();
            } catch (const Error&) {
                is_cached = false;  // corrupt entries fall through to regeneration
            }
            if (!is_cached && options.stop_after_new > 0) {
                std::lock_guard<std::mutex> lock(emit_mutex);
                if (new_renders >= options.stop_after_new) {
                    continue;  // skipped entirely; a rerun picks it up
                }
                ++new_renders;
            }

            GenerationRecord rec;
            try {
                if (options.assess && options.validity) {
                    rec = regenerate_until_valid(generator, request, options.assess,
                                                 options.validity, options.max_attempts);
                } else {
                    rec = generator.generate(request);
                }
            } catch (const Error& e) {
                rec = GenerationRecord{};
                rec.fingerprint = request.fingerprint();
                rec.backend_kind = generator.backend().kind();
                rec.status = GenStatus::Failed;
                rec.seed_id = seed.id;
                rec.prompt_id = prompt.id;
                rec.word = prompt.word;
                rec.domain = prompt.domain;
                rec.model_id = model_id;
                rec.error = e.what();
                failed.fetch_add(1);
            }

            {
                std::lock_guard<std::mutex> lock(emit_mutex);
                slots[i] = rec;
                if (!options.manifest_path.empty()) {
                    append_jsonl(options.manifest_path, rec.to_json());
                }
            }
            std::size_t completed = done.fetch_add(1) + 1;
            if (options.progress) options.progress(completed, total);

            if (completed >= static_cast<std::size_t>(options.failure_min_sample) &&
                options.failure_ceiling > 0.0) {
                double rate = static_cast<double>(failed.load()) / static_cast<double>(completed);
                if (rate > options.failure_ceiling) {
                    abort_flag.store(true);
                    return;
                }
            }
        }
    };

    int threads = std::max(1, options.concurrency);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    if (abort_flag.load()) {
        raise(ErrorCode::ExcessiveFailureRate,
              std::to_string(failed.load()) + " of " + std::to_string(done.load()) +
                  " generations failed (ceiling " + std::to_string(options.failure_ceiling) + ")");
    }

    std::vector<GenerationRecord> records;
    records.reserve(total);
    for (auto& slot : slots) {
        if (slot) records.push_back(std::move(*slot));
    }
    return records;
}

std::shared_ptr<ImageBackend> make_backend(const nlohmann::json& config,
                                           std::uint64_t run_rng_seed) {
    std::string kind = config.value("kind", "");
    if (kind == "mock") {
        return std::make_shared<MockBackend>();
    }
    if (kind == "synthetic_bias") {
        auto profile = SyntheticBiasProfile::from_json(
            config.value("profile", nlohmann::json::object()));
        return std::make_shared<SyntheticBiasBackend>(std::move(profile));
    }
    if (kind == "http") {
        HttpBackendConfig http;
        if (!config.contains("base_url")) {
            raise(ErrorCode::ConfigInvalid, "http backend needs base_url");
        }
        http.base_url = config.at("base_url").get<std::string>();
        const auto& tmpl = config.value("request_template", nlohmann::json::object());
        http.path = tmpl.value("path", std::string("/v1/edit"));
        http.encoding = tmpl.value("encoding", std::string("json_base64"));
        http.image_field = tmpl.value("image_field", std::string("image"));
        http.prompt_field = tmpl.value("prompt_field", std::string("prompt"));
        http.seed_field = tmpl.value("seed_field", std::string());
        http.static_fields = tmpl.value("static_fields", nlohmann::json::object());
        const auto& resp = config.value("response", nlohmann::json::object());
        http.response_mode = resp.value("mode", std::string("b64_json"));
        http.response_path = resp.value("path", std::string("/image"));
        http.auth_header = config.value("auth_header", std::string());
        http.auth_env_var = config.value("auth_env_var", std::string());
        http.refusal_marker = config.value("refusal_marker", std::string());
        http.timeout_ms = config.value("timeout_ms", 30000);
        http.max_retries = config.value("max_retries", 5);
        http.retry_base_ms = config.value("retry_base_ms", 250);
        http.rate_limit_rps = config.value("rate_limit_rps", 1.0);
        return std::make_shared<HttpImageBackend>(std::move(http), run_rng_seed);
    }
    raise(ErrorCode::ConfigInvalid, "unknown backend kind '" + kind + "'");
}

}  // namespace fairlens::backend
