#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairlens/backend.hpp"
#include "fairlens/corpus.hpp"
#include "fairlens/geometry.hpp"
#include "fairlens/image.hpp"

namespace fairlens::fixture {

// A synthetic rectangular face: the 68 landmarks are laid out so the convex
// hull is exactly the face rectangle and the eye/mouth polygons are interior
// rectangles, making mask pixel counts hand-computable:
//   hull  = (width + 1) * (height + 1) lattice points
//   holes = per-rectangle (w + 1) * (h + 1)
struct FixtureFace {
    int left = 16;
    int top = 16;
    int width = 64;   // face rect spans x in [left, left + width]
    int height = 64;  // and y in [top, top + height]
    corpus::Gender gender = corpus::Gender::Male;
    double age = 30.0;
    std::array<std::uint8_t, 3> skin{180, 150, 120};
};

struct Rect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive corners
    std::size_t lattice_count() const {
        return static_cast<std::size_t>(x1 - x0 + 1) * static_cast<std::size_t>(y1 - y0 + 1);
    }
};

Rect left_eye_rect(const FixtureFace& face);
Rect right_eye_rect(const FixtureFace& face);
Rect mouth_rect(const FixtureFace& face);

// Expected pixel count of the skin mask for one fixture face.
std::size_t expected_mask_count(const FixtureFace& face);

// The 68 iBUG-indexed landmarks for the rectangular synthetic face.
// Requires width, height >= 24.
std::array<geom::Point, 68> rect_landmarks(const FixtureFace& face);

struct PortraitSpec {
    int width = 96;
    int height = 96;
    std::array<std::uint8_t, 3> background{225, 225, 225};
    std::vector<FixtureFace> faces;
};

Image render_portrait(const PortraitSpec& spec);
nlohmann::json portrait_sidecar(const PortraitSpec& spec);

// PNG plus `<png>.faces.json` stub-analyzer sidecar.
void write_portrait(const PortraitSpec& spec, const std::filesystem::path& png_path);

// A ready-to-run demo workspace: seed portraits with sidecars, a seed
// manifest, a lexicon, backend/analyzer configs and a run config.
struct WorkspaceOptions {
    std::filesystem::path dir;
    int per_group = 1;
    std::vector<corpus::DemographicGroup> groups;  // default: all 18
    // (word, domain) pairs; default: a 12-word mixed-domain subset.
    std::vector<std::pair<std::string, corpus::Domain>> words;
    backend::SyntheticBiasProfile profile;  // default: identity (no shifts)
    std::string model_id = "demo-model";
    std::uint64_t rng_seed = 7;
    std::optional<std::filesystem::path> lexicon_source;  // copy instead of subset
};

struct WorkspaceInfo {
    std::filesystem::path run_config;
    std::filesystem::path seed_manifest;
    std::filesystem::path lexicon;
    std::filesystem::path backend_config;
    std::filesystem::path analyzer_config;
    std::filesystem::path output_dir;
    std::size_t seed_count = 0;
};

WorkspaceInfo write_fixture_workspace(const WorkspaceOptions& options);

// Canonical skin tone / age used for fixture seeds of a group.
std::array<std::uint8_t, 3> skin_for(corpus::Race race);
double age_for(corpus::AgeBand band);

}  // namespace fairlens::fixture
