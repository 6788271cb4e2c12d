#include "fairlens/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace fairlens::geom {

double cross(const Point& a, const Point& b, const Point& c) {
    return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

double polygon_area2(std::span<const Point> polygon) {
    double acc = 0.0;
    std::size_t n = polygon.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = polygon[i];
        const Point& b = polygon[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    return acc;
}

bool on_segment(const Point& p, const Point& a, const Point& b) {
    if (cross(a, b, p) != 0.0) return false;
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
           std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

std::vector<Point> convex_hull(std::span<const Point> points) {
    std::vector<Point> pts(points.begin(), points.end());
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    std::size_t n = pts.size();
    if (n < 3) return pts;

    std::vector<Point> hull(2 * n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {  // lower chain
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    std::size_t lower = k + 1;
    for (std::size_t i = n - 1; i-- > 0;) {  // upper chain
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

bool in_convex_inclusive(std::span<const Point> hull_ccw, const Point& p) {
    std::size_t n = hull_ccw.size();
    if (n == 0) return false;
    if (n == 1) return hull_ccw[0] == p;
    if (n == 2) return on_segment(p, hull_ccw[0], hull_ccw[1]);
    for (std::size_t i = 0; i < n; ++i) {
        if (cross(hull_ccw[i], hull_ccw[(i + 1) % n], p) < 0.0) return false;
    }
    return true;
}

bool in_polygon_evenodd_inclusive(std::span<const Point> polygon, const Point& p) {
    std::size_t n = polygon.size();
    if (n == 0) return false;
    bool inside = false;
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = polygon[i];
        const Point& b = polygon[(i + 1) % n];
        if (on_segment(p, a, b)) return true;
        // Half-open vertical span [min(ay,by), max(ay,by)) so shared vertices
        // are counted once; the crossing test is cross-multiplied to stay
        // division-free (exact on integer coordinates).
        if ((a.y > p.y) != (b.y > p.y)) {
            double d = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
            if (b.y > a.y ? d > 0.0 : d < 0.0) inside = !inside;
        }
    }
    return inside;
}

std::size_t PixelMask::count() const {
    std::size_t c = 0;
    for (std::uint8_t v : on) c += v != 0;
    return c;
}

namespace {

template <typename Membership>
PixelMask rasterize_with(std::span<const Point> outer,
                         std::span<const std::vector<Point>> holes, int width, int height,
                         Membership&& inside) {
    PixelMask mask(width, height);
    if (outer.empty()) return mask;

    double min_x = outer[0].x, max_x = outer[0].x;
    double min_y = outer[0].y, max_y = outer[0].y;
    for (const auto& p : outer) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    int x0 = std::max(0, static_cast<int>(std::floor(min_x)));
    int x1 = std::min(width - 1, static_cast<int>(std::ceil(max_x)));
    int y0 = std::max(0, static_cast<int>(std::floor(min_y)));
    int y1 = std::min(height - 1, static_cast<int>(std::ceil(max_y)));

    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            Point p{static_cast<double>(x), static_cast<double>(y)};
            if (!inside(p)) continue;
            bool in_hole = false;
            for (const auto& hole : holes) {
                if (in_polygon_evenodd_inclusive(hole, p)) {
                    in_hole = true;
                    break;
                }
            }
            if (!in_hole) mask.set(x, y, true);
        }
    }
    return mask;
}

}  // namespace

PixelMask rasterize_convex_with_holes(std::span<const Point> outer_ccw,
                                      std::span<const std::vector<Point>> holes, int width,
                                      int height) {
    return rasterize_with(outer_ccw, holes, width, height,
                          [&](const Point& p) { return in_convex_inclusive(outer_ccw, p); });
}

PixelMask rasterize_polygon_with_holes(std::span<const Point> outer,
                                       std::span<const std::vector<Point>> holes, int width,
                                       int height) {
    return rasterize_with(outer, holes, width, height, [&](const Point& p) {
        return in_polygon_evenodd_inclusive(outer, p);
    });
}

}  // namespace fairlens::geom
