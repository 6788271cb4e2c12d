#include "fairlens/vision.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace fairlens::vision {

namespace fs = std::filesystem;

double FaceObservation::bbox_area() const {
    double min_x = landmarks[0].x, max_x = landmarks[0].x;
    double min_y = landmarks[0].y, max_y = landmarks[0].y;
    for (const auto& p : landmarks) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    return (max_x - min_x) * (max_y - min_y);
}

std::string_view to_string(GenderState value) {
    switch (value) {
        case GenderState::Male: return "male";
        case GenderState::Female: return "female";
        case GenderState::Inconsistent: return "inconsistent";
        case GenderState::NoFace: return "no_face";
    }
    return "?";
}

GenderState parse_gender_state(std::string_view text) {
    if (text == "male") return GenderState::Male;
    if (text == "female") return GenderState::Female;
    if (text == "inconsistent") return GenderState::Inconsistent;
    if (text == "no_face") return GenderState::NoFace;
    raise(ErrorCode::MalformedManifest, "unknown gender state '" + std::string(text) + "'");
}

GenderState to_state(Gender g) {
    return g == Gender::Male ? GenderState::Male : GenderState::Female;
}

nlohmann::json ImageProperties::to_json() const {
    return {{"face_count", face_count},
            {"gender", std::string(to_string(gender))},
            {"age_years", age_years},
            {"mean_gray", mean_gray},
            {"valid", valid}};
}

ImageProperties ImageProperties::from_json(const nlohmann::json& doc) {
    ImageProperties props;
    props.face_count = doc.at("face_count").get<int>();
    props.gender = parse_gender_state(doc.at("gender").get<std::string>());
    props.age_years = doc.at("age_years").get<double>();
    props.mean_gray = doc.at("mean_gray").get<double>();
    props.valid = doc.at("valid").get<bool>();
    return props;
}

void ExposureBounds::validate() const {
    if (!(v_min >= 0.0 && v_min < v_max && v_max <= 1.0)) {
        raise(ErrorCode::ConfigInvalid, "exposure bounds need 0 <= v_min < v_max <= 1");
    }
}

std::vector<FaceObservation> parse_analyzer_response(const nlohmann::json& doc,
                                                     const Image& image) {
    if (!doc.is_object() || !doc.contains("faces") || !doc["faces"].is_array()) {
        raise(ErrorCode::AnalyzerMalformedResponse, "missing 'faces' array");
    }
    std::vector<FaceObservation> faces;
    for (const auto& face : doc["faces"]) {
        FaceObservation obs;
        if (!face.contains("landmarks") || !face["landmarks"].is_array() ||
            face["landmarks"].size() != kLandmarkCount) {
            raise(ErrorCode::AnalyzerMalformedResponse, "expected 68 landmarks per face");
        }
        for (std::size_t i = 0; i < kLandmarkCount; ++i) {
            const auto& pt = face["landmarks"][i];
            if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number()) {
                raise(ErrorCode::AnalyzerMalformedResponse, "landmark must be [x, y]");
            }
            obs.landmarks[i] = geom::Point{pt[0].get<double>(), pt[1].get<double>()};
            if (obs.landmarks[i].x < 0 || obs.landmarks[i].x > image.width - 1 ||
                obs.landmarks[i].y < 0 || obs.landmarks[i].y > image.height - 1) {
                raise(ErrorCode::AnalyzerMalformedResponse,
                      "landmark outside image bounds");
            }
        }
        std::string gender = face.value("gender", "");
        if (gender == "Male") obs.predicted_gender = Gender::Male;
        else if (gender == "Female") obs.predicted_gender = Gender::Female;
        else raise(ErrorCode::AnalyzerMalformedResponse, "gender must be 'Male' or 'Female'");
        if (!face.contains("age") || !face["age"].is_number()) {
            raise(ErrorCode::AnalyzerMalformedResponse, "missing numeric age");
        }
        obs.predicted_age = face["age"].get<double>();
        if (obs.predicted_age < 0) {
            raise(ErrorCode::AnalyzerMalformedResponse, "negative age");
        }
        obs.detector_confidence = face.value("confidence", 1.0);
        faces.push_back(obs);
    }
    return faces;
}

std::vector<FaceObservation> SidecarStubAnalyzer::analyze(const fs::path& image_path,
                                                          const Image& image) {
    fs::path sidecar = image_path;
    sidecar += ".faces.json";
    if (!fs::exists(sidecar)) {
        return {};  // no sidecar, no face
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text_file(sidecar));
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::AnalyzerMalformedResponse, sidecar.string() + ": " + e.what());
    }
    return parse_analyzer_response(doc, image);
}

HttpFaceAnalyzer::HttpFaceAnalyzer(HttpAnalyzerConfig config) : config_(std::move(config)) {}

std::vector<FaceObservation> HttpFaceAnalyzer::analyze(const fs::path& image_path,
                                                       const Image& image) {
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(0, config_.timeout_ms * 1000);
    client.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);

    httplib::Headers headers;
    if (!config_.auth_header.empty() && !config_.auth_env_var.empty()) {
        const char* secret = std::getenv(config_.auth_env_var.c_str());
        if (!secret) {
            raise(ErrorCode::ConfigInvalid,
                  "analyzer auth env var not set: " + config_.auth_env_var);
        }
        headers.emplace(config_.auth_header, secret);
    }

    httplib::MultipartFormDataItems items = {
        {"image", encode_png(image), image_path.filename().string(), "image/png"},
    };
    auto res = client.Post(config_.path, headers, items);
    if (!res) {
        raise(ErrorCode::AnalyzerUnavailable,
              config_.base_url + config_.path + ": " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        raise(ErrorCode::AnalyzerUnavailable,
              "analyzer returned HTTP " + std::to_string(res->status));
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::AnalyzerMalformedResponse, e.what());
    }
    return parse_analyzer_response(doc, image);
}

std::vector<FaceObservation> analyze_faces(const fs::path& image_path, const Image& image,
                                           FaceAnalyzer& analyzer) {
    auto faces = analyzer.analyze(image_path, image);
    std::stable_sort(faces.begin(), faces.end(), [](const auto& a, const auto& b) {
        return a.bbox_area() > b.bbox_area();
    });
    return faces;
}

namespace {

geom::PixelMask rasterize_face(std::span<const geom::Point> landmarks, int width, int height,
                               bool subtract_holes) {
    if (landmarks.size() != kLandmarkCount) {
        raise(ErrorCode::DegenerateLandmarks,
              "expected 68 landmarks, got " + std::to_string(landmarks.size()));
    }
    auto hull = geom::convex_hull(landmarks);
    if (hull.size() < 3 || std::abs(geom::polygon_area2(hull)) < 32.0) {  // area < 16 px^2
        raise(ErrorCode::DegenerateLandmarks, "landmark hull area below 16 px^2");
    }

    std::vector<std::vector<geom::Point>> holes;
    if (subtract_holes) {
        auto slice = [&](std::size_t first, std::size_t last) {
            return std::vector<geom::Point>(landmarks.begin() + static_cast<std::ptrdiff_t>(first),
                                            landmarks.begin() +
                                                static_cast<std::ptrdiff_t>(last + 1));
        };
        holes.push_back(slice(kLeftEyeFirst, kLeftEyeLast));
        holes.push_back(slice(kRightEyeFirst, kRightEyeLast));
        holes.push_back(slice(kOuterMouthFirst, kOuterMouthLast));
    }
    return geom::rasterize_convex_with_holes(hull, holes, width, height);
}

}  // namespace

geom::PixelMask face_mask(std::span<const geom::Point> landmarks, int width, int height) {
    return rasterize_face(landmarks, width, height, /*subtract_holes=*/true);
}

geom::PixelMask face_hull_mask(std::span<const geom::Point> landmarks, int width, int height) {
    return rasterize_face(landmarks, width, height, /*subtract_holes=*/false);
}

geom::PixelMask exposure_filter(const Image& image, const geom::PixelMask& mask,
                                const ExposureBounds& bounds) {
    bounds.validate();
    if (mask.width != image.width || mask.height != image.height) {
        raise(ErrorCode::ConfigInvalid, "mask dimensions do not match image");
    }
    geom::PixelMask out(mask.width, mask.height);
    std::size_t kept = 0;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            const std::uint8_t* px = image.pixel(x, y);
            int v255 = std::max(px[0], std::max(px[1], px[2]));
            double v = v255 / 255.0;
            if (v >= bounds.v_min && v <= bounds.v_max) {
                out.set(x, y, true);
                ++kept;
            }
        }
    }
    if (kept == 0) {
        raise(ErrorCode::EmptyMaskAfterFilter, "no pixels within exposure bounds");
    }
    return out;
}

namespace {

// Integer-scaled luma accumulation: 1000 * (0.299 R + 0.587 G + 0.114 B).
void accumulate_luma(const Image& image, const geom::PixelMask& mask, std::uint64_t& sum_milli,
                     std::uint64_t& count) {
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            const std::uint8_t* px = image.pixel(x, y);
            sum_milli += 299ull * px[0] + 587ull * px[1] + 114ull * px[2];
            ++count;
        }
    }
}

}  // namespace

double mean_gray(const Image& image, const geom::PixelMask& mask) {
    if (mask.width != image.width || mask.height != image.height) {
        raise(ErrorCode::ConfigInvalid, "mask dimensions do not match image");
    }
    std::uint64_t sum_milli = 0, count = 0;
    accumulate_luma(image, mask, sum_milli, count);
    if (count == 0) {
        raise(ErrorCode::EmptyMask, "mean_gray over empty mask");
    }
    return static_cast<double>(sum_milli) / (1000.0 * static_cast<double>(count));
}

ImageProperties assess_properties(const fs::path& image_path, const Image& image,
                                  FaceAnalyzer& analyzer, const ExposureBounds& bounds) {
    ImageProperties props;
    auto faces = analyze_faces(image_path, image, analyzer);
    props.face_count = static_cast<int>(faces.size());
    if (faces.empty()) {
        props.gender = GenderState::NoFace;
        props.valid = false;
        return props;
    }

    props.gender = to_state(faces[0].predicted_gender);
    for (const auto& f : faces) {
        if (to_state(f.predicted_gender) != props.gender) {
            props.gender = GenderState::Inconsistent;
            break;
        }
    }

    double age_sum = 0.0;
    for (const auto& f : faces) age_sum += f.predicted_age;
    props.age_years = age_sum / static_cast<double>(faces.size());

    // Pool skin pixels over the union of per-face exposure-filtered masks.
    // A face whose hull degenerates or is fully over/under-exposed simply
    // contributes nothing.
    geom::PixelMask pooled(image.width, image.height);
    bool any = false;
    for (const auto& f : faces) {
        try {
            auto m = face_mask(f.landmarks, image.width, image.height);
            auto filtered = exposure_filter(image, m, bounds);
            for (std::size_t i = 0; i < pooled.on.size(); ++i) {
                pooled.on[i] |= filtered.on[i];
            }
            any = true;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::DegenerateLandmarks &&
                e.code() != ErrorCode::EmptyMaskAfterFilter) {
                throw;
            }
        }
    }
    bool skin_ok = any && pooled.count() > 0;
    props.mean_gray = skin_ok ? mean_gray(image, pooled) : 0.0;
    props.valid = props.face_count >= 1 && props.gender != GenderState::Inconsistent && skin_ok;
    return props;
}

std::unique_ptr<FaceAnalyzer> make_analyzer(const nlohmann::json& config) {
    std::string kind = config.value("kind", "");
    if (kind == "sidecar_stub") {
        return std::make_unique<SidecarStubAnalyzer>();
    }
    if (kind == "http") {
        HttpAnalyzerConfig http;
        if (!config.contains("base_url")) {
            raise(ErrorCode::ConfigInvalid, "http analyzer needs base_url");
        }
        http.base_url = config.at("base_url").get<std::string>();
        http.path = config.value("path", std::string("/analyze"));
        http.auth_header = config.value("auth_header", std::string());
        http.auth_env_var = config.value("auth_env_var", std::string());
        http.timeout_ms = config.value("timeout_ms", 10000);
        return std::make_unique<HttpFaceAnalyzer>(std::move(http));
    }
    raise(ErrorCode::ConfigInvalid, "unknown analyzer kind '" + kind + "'");
}

}  // namespace fairlens::vision
