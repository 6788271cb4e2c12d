#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fairlens/common.hpp"
#include "fairlens/corpus.hpp"
#include "fairlens/geometry.hpp"
#include "fairlens/image.hpp"

namespace fairlens::vision {

using corpus::Gender;

constexpr std::size_t kLandmarkCount = 68;

// iBUG-68 index ranges for the regions removed from the skin mask.
constexpr std::size_t kLeftEyeFirst = 36, kLeftEyeLast = 41;
constexpr std::size_t kRightEyeFirst = 42, kRightEyeLast = 47;
constexpr std::size_t kOuterMouthFirst = 48, kOuterMouthLast = 59;

// One detected face: 68 iBUG landmarks plus the analyzer's gender/age call.
struct FaceObservation {
    std::array<geom::Point, kLandmarkCount> landmarks{};
    Gender predicted_gender = Gender::Male;
    double predicted_age = 0.0;
    double detector_confidence = 1.0;

    double bbox_area() const;
};

enum class GenderState { Male, Female, Inconsistent, NoFace };

std::string_view to_string(GenderState value);
GenderState parse_gender_state(std::string_view text);
GenderState to_state(Gender g);

// Assessed properties of one image; multi-face images pool age and skin gray
// across faces and demand gender agreement.
struct ImageProperties {
    int face_count = 0;
    GenderState gender = GenderState::NoFace;
    double age_years = 0.0;
    double mean_gray = 0.0;
    bool valid = false;

    nlohmann::json to_json() const;
    static ImageProperties from_json(const nlohmann::json& doc);
};

// HSV value-channel bounds for the over/under-exposure filter.
struct ExposureBounds {
    double v_min = 0.10;
    double v_max = 0.95;

    void validate() const;
};

// Face analyzer plug-in. Landmark/age/gender inference is never done
// in-process; implementations either call an HTTP service or read a
// test sidecar.
class FaceAnalyzer {
public:
    virtual ~FaceAnalyzer() = default;
    virtual std::vector<FaceObservation> analyze(const std::filesystem::path& image_path,
                                                 const Image& image) = 0;
};

// Reads `<image>.faces.json` next to the image; a missing sidecar means "no
// face". Format matches the HTTP analyzer response:
//   {"faces": [{"landmarks": [[x,y] x68], "gender": "Male"|"Female",
//               "age": number, "confidence": number}]}
class SidecarStubAnalyzer final : public FaceAnalyzer {
public:
    std::vector<FaceObservation> analyze(const std::filesystem::path& image_path,
                                         const Image& image) override;
};

struct HttpAnalyzerConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8900
    std::string path = "/analyze";
    std::string auth_header;   // optional header name
    std::string auth_env_var;  // env var holding the header value
    int timeout_ms = 10000;
};

// POSTs the image (multipart field "image") and parses the JSON contract
// above. Connection failures raise AnalyzerUnavailable; contract violations
// raise AnalyzerMalformedResponse.
class HttpFaceAnalyzer final : public FaceAnalyzer {
public:
    explicit HttpFaceAnalyzer(HttpAnalyzerConfig config);
    std::vector<FaceObservation> analyze(const std::filesystem::path& image_path,
                                         const Image& image) override;

private:
    HttpAnalyzerConfig config_;
};

// Parses the analyzer JSON contract and validates it against the image
// bounds. Shared by the HTTP client and the sidecar stub.
std::vector<FaceObservation> parse_analyzer_response(const nlohmann::json& doc,
                                                     const Image& image);

// Runs the analyzer and returns observations ordered by descending face
// bounding-box area (stable for ties).
std::vector<FaceObservation> analyze_faces(const std::filesystem::path& image_path,
                                           const Image& image, FaceAnalyzer& analyzer);

// Rasterizes the skin region: convex hull of all 68 landmarks minus the
// filled eye and outer-mouth polygons. A pixel belongs to the mask when its
// integer lattice point lies on or inside the hull and not on or inside any
// removed polygon. Exact for integer landmark coordinates.
geom::PixelMask face_mask(std::span<const geom::Point> landmarks, int width, int height);

// Convex hull of the landmarks rasterized inclusively, holes kept. Used by
// callers that need the whole face polygon (e.g. synthetic rendering).
geom::PixelMask face_hull_mask(std::span<const geom::Point> landmarks, int width, int height);

// Keeps mask pixels whose HSV value channel V = max(R,G,B)/255 lies in
// [v_min, v_max]. Raises EmptyMaskAfterFilter when nothing survives.
geom::PixelMask exposure_filter(const Image& image, const geom::PixelMask& mask,
                                const ExposureBounds& bounds);

// Mean Rec.601 luma (0.299 R + 0.587 G + 0.114 B) over the mask. The sum is
// accumulated as the integer 299R + 587G + 114B, so the result is exact up
// to one final division and independent of pixel visitation order.
double mean_gray(const Image& image, const geom::PixelMask& mask);

// Full per-image assessment: face count, gender consensus, mean age, pooled
// exposure-filtered skin gray, and the validity verdict. Faces whose mask
// degenerates contribute no skin pixels; analyzer errors propagate.
ImageProperties assess_properties(const std::filesystem::path& image_path, const Image& image,
                                  FaceAnalyzer& analyzer, const ExposureBounds& bounds);

// Analyzer factory from config JSON {"kind": "sidecar_stub"} or
// {"kind": "http", ...}.
std::unique_ptr<FaceAnalyzer> make_analyzer(const nlohmann::json& config);

}  // namespace fairlens::vision
