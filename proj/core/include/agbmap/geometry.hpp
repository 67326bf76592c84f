#pragma once

#include <algorithm>
#include <cmath>

namespace agbmap {

/// Planar coordinate in meters (projected CRS shared by plots and rasters).
struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Axis-aligned rectangle, inclusive of its edges.
struct BBox {
    double xmin = 0.0;
    double ymin = 0.0;
    double xmax = 0.0;
    double ymax = 0.0;

    double width() const { return xmax - xmin; }
    double height() const { return ymax - ymin; }
    bool empty() const { return !(xmax > xmin) || !(ymax > ymin); }
    bool contains(Point p) const { return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax; }

    friend bool operator==(const BBox&, const BBox&) = default;
};

} // namespace agbmap
