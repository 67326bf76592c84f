#include "agbmap/footprint.hpp"

#include "agbmap/inventory.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace agbmap {

std::array<Point, 4> subplot_centers(Point center)
{
    constexpr double deg = std::numbers::pi / 180.0;
    std::array<Point, 4> pts{};
    pts[0] = center;
    const double azimuths[3] = {360.0, 120.0, 240.0};
    for (int k = 0; k < 3; ++k) {
        const double az = azimuths[k] * deg;
        pts[k + 1] = {center.x + kSubplotOffsetM * std::sin(az), center.y + kSubplotOffsetM * std::cos(az)};
    }
    return pts;
}

PlotFootprint::PlotFootprint(Point c)
    : center(c), subplot_centers(agbmap::subplot_centers(c)), subplot_radius(kSubplotRadiusM)
{
}

double PlotFootprint::area_m2() const
{
    return 4.0 * std::numbers::pi * subplot_radius * subplot_radius;
}

namespace {

// Disk of radius r at the origin, restricted to y >= h (h >= 0) and x0 <= x <= x1.
double cap_strip_area(double r, double h, double x0, double x1)
{
    if (h >= r) {
        return 0.0;
    }
    const double s = std::sqrt(r * r - h * h);
    const double a = std::max(x0, -s);
    const double b = std::min(x1, s);
    if (b <= a) {
        return 0.0;
    }
    auto antiderivative = [&](double x) {
        const double q = std::clamp(x / r, -1.0, 1.0);
        return 0.5 * (x * std::sqrt(std::max(0.0, r * r - x * x)) + r * r * std::asin(q)) - h * x;
    };
    return antiderivative(b) - antiderivative(a);
}

// Disk at the origin inside [x0,x1] x [y0,y1] with 0 <= y0 <= y1.
double upper_band_area(double r, double x0, double x1, double y0, double y1)
{
    return cap_strip_area(r, y0, x0, x1) - cap_strip_area(r, y1, x0, x1);
}

} // namespace

double circle_rect_intersection(Point center, double radius, double x0, double x1, double y0, double y1)
{
    x0 = std::max(x0 - center.x, -radius);
    x1 = std::min(x1 - center.x, radius);
    y0 = std::max(y0 - center.y, -radius);
    y1 = std::min(y1 - center.y, radius);
    if (x1 <= x0 || y1 <= y0) {
        return 0.0;
    }
    double area = 0.0;
    if (y1 > 0.0) {
        area += upper_band_area(radius, x0, x1, std::max(y0, 0.0), y1);
    }
    if (y0 < 0.0) {
        // Mirror the part below the center onto the upper half.
        area += upper_band_area(radius, x0, x1, std::max(-y1, 0.0), -y0);
    }
    return std::max(area, 0.0);
}

OverlapWeights pixel_overlap_weights(const PlotFootprint& fp, const GridGeometry& geom)
{
    const double cs = geom.cellsize;
    const double r = fp.subplot_radius;
    const double top = geom.y_max();
    // Slivers below this are rounding noise from tangent edges.
    const double min_weight = 1e-9 * r * r;

    std::map<std::pair<int, int>, double> acc;
    for (const auto& c : fp.subplot_centers) {
        const int col_lo = std::max(0, static_cast<int>(std::floor((c.x - r - geom.x_origin) / cs)));
        const int col_hi = std::min(geom.ncols - 1, static_cast<int>(std::floor((c.x + r - geom.x_origin) / cs)));
        const int row_lo = std::max(0, static_cast<int>(std::floor((top - (c.y + r)) / cs)));
        const int row_hi = std::min(geom.nrows - 1, static_cast<int>(std::floor((top - (c.y - r)) / cs)));
        for (int row = row_lo; row <= row_hi; ++row) {
            const double y1 = top - row * cs;
            const double y0 = y1 - cs;
            for (int col = col_lo; col <= col_hi; ++col) {
                const double x0 = geom.x_origin + col * cs;
                const double w = circle_rect_intersection(c, r, x0, x0 + cs, y0, y1);
                if (w > min_weight) {
                    acc[{row, col}] += w;
                }
            }
        }
    }

    OverlapWeights out;
    out.reserve(acc.size());
    for (const auto& [rc, w] : acc) {
        out.push_back({rc.second, rc.first, w});
    }
    return out;
}

std::optional<double> extract_weighted_mean(const Grid& grid, const OverlapWeights& weights)
{
    double num = 0.0;
    double den = 0.0;
    for (const auto& w : weights) {
        const auto i = grid.index(w.col, w.row);
        if (!grid.valid(i)) {
            continue;
        }
        num += w.weight * static_cast<double>(grid.value(i));
        den += w.weight;
    }
    if (den <= 0.0) {
        return std::nullopt;
    }
    return num / den;
}

std::optional<double> extract_weighted_mean(const Grid& grid, const PlotFootprint& fp)
{
    return extract_weighted_mean(grid, pixel_overlap_weights(fp, grid.geometry()));
}

} // namespace agbmap
