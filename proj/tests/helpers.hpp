#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fairlens/fixture.hpp"
#include "fairlens/geometry.hpp"
#include "fairlens/image.hpp"
#include "fairlens/vision.hpp"

namespace fairlens::testing {

namespace fs = std::filesystem;

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "fairlens-test") {
        static std::atomic<unsigned> counter{0};
        auto base = fs::temp_directory_path();
        path_ = base / (tag + "-" + std::to_string(::getpid()) + "-" +
                        std::to_string(counter.fetch_add(1)));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

// ---------------------------------------------------------------------------
// Independent geometry oracles. Deliberately different algorithms from the
// library: gift-wrapping hull and division-based ray casting, used only to
// cross-check rasterization.
// ---------------------------------------------------------------------------

namespace oracle {

inline double cross3(const geom::Point& o, const geom::Point& a, const geom::Point& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

inline bool on_edge(const geom::Point& p, const geom::Point& a, const geom::Point& b) {
    if (cross3(a, b, p) != 0.0) return false;
    return p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) &&
           p.y >= std::min(a.y, b.y) && p.y <= std::max(a.y, b.y);
}

// Jarvis march, counter-clockwise.
inline std::vector<geom::Point> hull_gift_wrap(std::vector<geom::Point> pts) {
    std::sort(pts.begin(), pts.end(), [](const geom::Point& a, const geom::Point& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return pts;
    std::vector<geom::Point> hull;
    std::size_t start = 0;  // leftmost-lowest after sort
    std::size_t current = start;
    do {
        hull.push_back(pts[current]);
        std::size_t best = (current + 1) % pts.size();
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i == current) continue;
            double c = cross3(pts[current], pts[best], pts[i]);
            if (c < 0.0) {
                best = i;
            } else if (c == 0.0) {
                double db = (pts[best].x - pts[current].x) * (pts[best].x - pts[current].x) +
                            (pts[best].y - pts[current].y) * (pts[best].y - pts[current].y);
                double di = (pts[i].x - pts[current].x) * (pts[i].x - pts[current].x) +
                            (pts[i].y - pts[current].y) * (pts[i].y - pts[current].y);
                if (di > db) best = i;
            }
        }
        current = best;
    } while (current != start && hull.size() <= pts.size());
    // gift wrapping above walks clockwise; reverse for CCW
    std::reverse(hull.begin(), hull.end());
    return hull;
}

// Even-odd membership with inclusive boundary, via the classic
// division-based ray cast (safe off-boundary for lattice points).
inline bool point_in_poly_inclusive(const std::vector<geom::Point>& poly, const geom::Point& p) {
    std::size_t n = poly.size();
    if (n == 0) return false;
    for (std::size_t i = 0; i < n; ++i) {
        if (on_edge(p, poly[i], poly[(i + 1) % n])) return true;
    }
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const auto& a = poly[i];
        const auto& b = poly[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            double x_at = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if (p.x < x_at) inside = !inside;
        }
    }
    return inside;
}

// Brute-force skin mask: scan every pixel against hull and hole polygons.
inline geom::PixelMask face_mask_scan(const std::vector<geom::Point>& landmarks, int width,
                                      int height) {
    std::vector<geom::Point> hull = hull_gift_wrap(landmarks);
    auto hole = [&](std::size_t first, std::size_t last) {
        return std::vector<geom::Point>(landmarks.begin() + static_cast<std::ptrdiff_t>(first),
                                        landmarks.begin() + static_cast<std::ptrdiff_t>(last + 1));
    };
    std::vector<std::vector<geom::Point>> holes = {hole(36, 41), hole(42, 47), hole(48, 59)};
    geom::PixelMask mask(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            geom::Point p{static_cast<double>(x), static_cast<double>(y)};
            if (!point_in_poly_inclusive(hull, p)) continue;
            bool excluded = false;
            for (const auto& h : holes) {
                if (point_in_poly_inclusive(h, p)) {
                    excluded = true;
                    break;
                }
            }
            if (!excluded) mask.set(x, y, true);
        }
    }
    return mask;
}

// Naive double-accumulation luma mean over a mask.
inline double mean_gray_naive(const Image& image, const geom::PixelMask& mask) {
    double sum = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            if (!mask.at(x, y)) continue;
            const std::uint8_t* px = image.pixel(x, y);
            sum += 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
            ++count;
        }
    }
    return sum / static_cast<double>(count);
}

// Same accumulation visited in reverse raster order, for the
// permutation-invariance property.
inline double mean_gray_naive_reversed(const Image& image, const geom::PixelMask& mask) {
    double sum = 0.0;
    std::size_t count = 0;
    for (int y = image.height - 1; y >= 0; --y) {
        for (int x = image.width - 1; x >= 0; --x) {
            if (!mask.at(x, y)) continue;
            const std::uint8_t* px = image.pixel(x, y);
            sum += 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
            ++count;
        }
    }
    return sum / static_cast<double>(count);
}

// Exposure filter predicate recomputed pixel by pixel.
inline geom::PixelMask exposure_scan(const Image& image, const geom::PixelMask& mask, double v_min,
                                     double v_max) {
    geom::PixelMask out(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            const std::uint8_t* px = image.pixel(x, y);
            double v = std::max({px[0], px[1], px[2]}) / 255.0;
            if (v >= v_min && v <= v_max) out.set(x, y, true);
        }
    }
    return out;
}

}  // namespace oracle

// Single-face portrait written to disk with its sidecar; returns the PNG path.
inline fs::path write_single_face(const fs::path& dir, const std::string& name,
                                  corpus::Gender gender, double age,
                                  std::array<std::uint8_t, 3> skin) {
    fixture::PortraitSpec spec;
    fixture::FixtureFace face;
    face.gender = gender;
    face.age = age;
    face.skin = skin;
    spec.faces.push_back(face);
    fs::path png = dir / (name + ".png");
    fixture::write_portrait(spec, png);
    return png;
}

}  // namespace fairlens::testing
