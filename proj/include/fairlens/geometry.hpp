#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fairlens::geom {

struct Point {
    double x = 0.0;
    double y = 0.0;

    bool operator==(const Point&) const = default;
};

// 2x the signed area of triangle (a, b, c). Exact for integer-valued
// coordinates below 2^21: all intermediate products stay inside the 53-bit
// double mantissa, so every membership predicate built on this is exact for
// pixel-lattice landmarks.
double cross(const Point& a, const Point& b, const Point& c);

// 2x the signed polygon area.
double polygon_area2(std::span<const Point> polygon);

// True when p lies on the closed segment [a, b].
bool on_segment(const Point& p, const Point& a, const Point& b);

// Andrew's monotone chain; returns the hull counter-clockwise with strictly
// convex corners (collinear boundary points dropped). Degenerate inputs
// (all points collinear) collapse to a hull of fewer than 3 vertices.
std::vector<Point> convex_hull(std::span<const Point> points);

// Inclusive membership in a counter-clockwise convex polygon (boundary counts
// as inside).
bool in_convex_inclusive(std::span<const Point> hull_ccw, const Point& p);

// Even-odd (crossing parity) membership with the boundary counted as inside.
// Works for arbitrary, possibly self-intersecting polygons.
bool in_polygon_evenodd_inclusive(std::span<const Point> polygon, const Point& p);

// Inclusive rasterization of a counter-clockwise convex outer polygon with
// even-odd holes subtracted: a lattice point belongs to the result when it is
// on or inside the outer polygon and not on or inside any hole. Holes outside
// the outer polygon subtract nothing.
struct PixelMask;
PixelMask rasterize_convex_with_holes(std::span<const Point> outer_ccw,
                                      std::span<const std::vector<Point>> holes, int width,
                                      int height);

// Same contract for an arbitrary (possibly non-convex) outer polygon,
// membership by inclusive even-odd parity.
PixelMask rasterize_polygon_with_holes(std::span<const Point> outer,
                                       std::span<const std::vector<Point>> holes, int width,
                                       int height);

// Binary pixel mask over a raster of the given size.
struct PixelMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> on;

    PixelMask() = default;
    PixelMask(int w, int h)
        : width(w), height(h), on(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {}

    bool at(int x, int y) const {
        return on[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)] != 0;
    }
    void set(int x, int y, bool v) {
        on[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x)] = v ? 1 : 0;
    }
    std::size_t count() const;

    bool operator==(const PixelMask&) const = default;
};

}  // namespace fairlens::geom
