#include "agbmap/hexgrid.hpp"

#include "agbmap/error.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <map>

namespace agbmap {
namespace {

constexpr double kSqrt3 = 1.7320508075688772;

bool odd(int v) { return (v % 2) != 0; }

struct Interval {
    double lo;
    double hi;
};

bool overlaps(Interval a, Interval b) { return a.lo <= b.hi && b.lo <= a.hi; }

} // namespace

std::string to_string(HexId id) { return "R" + std::to_string(id.row) + "C" + std::to_string(id.col); }

HexGrid::HexGrid(BBox region, double spacing) : region_(region), spacing_(spacing)
{
    if (!(spacing > 0.0) || !std::isfinite(spacing)) {
        throw InvalidArgument("hexagon spacing must be positive");
    }
    if (region.empty()) {
        throw InvalidArgument("hexagon region must be a nonempty rectangle");
    }
    const double dx = 1.5 * circumradius();
    const double d = spacing_;
    const int q_lo = static_cast<int>(std::floor(-circumradius() / dx)) - 1;
    const int q_hi = static_cast<int>(std::ceil((region_.width() + circumradius()) / dx)) + 1;
    for (int q = q_lo; q <= q_hi; ++q) {
        const double off = odd(q) ? d / 2.0 : 0.0;
        const int r_lo = static_cast<int>(std::floor((-off - d) / d)) - 1;
        const int r_hi = static_cast<int>(std::ceil((region_.height() - off + d) / d)) + 1;
        for (int r = r_lo; r <= r_hi; ++r) {
            const HexId id{r, q};
            const Point c = center(id);
            if (touches_region(c)) {
                cells_.push_back({id, c});
            }
        }
    }
    std::sort(cells_.begin(), cells_.end(), [](const HexCell& a, const HexCell& b) { return a.id < b.id; });
}

double HexGrid::circumradius() const { return spacing_ / kSqrt3; }

double HexGrid::cell_area() const { return kSqrt3 / 2.0 * spacing_ * spacing_; }

Point HexGrid::center(HexId id) const
{
    const double dx = 1.5 * circumradius();
    const double off = odd(id.col) ? spacing_ / 2.0 : 0.0;
    return {region_.xmin + id.col * dx, region_.ymin + id.row * spacing_ + off};
}

// Separating-axis test between the hexagon centred at c and the region rectangle.
bool HexGrid::touches_region(Point c) const
{
    const double big_r = circumradius();
    const double apothem = spacing_ / 2.0;
    if (!overlaps({c.x - big_r, c.x + big_r}, {region_.xmin, region_.xmax})) {
        return false;
    }
    if (!overlaps({c.y - apothem, c.y + apothem}, {region_.ymin, region_.ymax})) {
        return false;
    }
    // Slanted edge normals of a flat-top hexagon at 30 and 150 degrees.
    const std::array<Point, 2> normals{Point{kSqrt3 / 2.0, 0.5}, Point{-kSqrt3 / 2.0, 0.5}};
    const std::array<Point, 4> corners{Point{region_.xmin, region_.ymin}, Point{region_.xmax, region_.ymin},
                                       Point{region_.xmin, region_.ymax}, Point{region_.xmax, region_.ymax}};
    for (const auto& n : normals) {
        const double cp = c.x * n.x + c.y * n.y;
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const auto& k : corners) {
            const double v = k.x * n.x + k.y * n.y;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (!overlaps({cp - apothem, cp + apothem}, {lo, hi})) {
            return false;
        }
    }
    return true;
}

bool HexGrid::contains(HexId id) const { return touches_region(center(id)); }

HexId HexGrid::nearest(Point p) const
{
    const double dx = 1.5 * circumradius();
    const double d = spacing_;
    const double tie = 1e-12 * d * d;
    const int q0 = static_cast<int>(std::lround((p.x - region_.xmin) / dx));

    HexId best{};
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int q = q0 - 1; q <= q0 + 1; ++q) {
        const double off = odd(q) ? d / 2.0 : 0.0;
        const int r0 = static_cast<int>(std::lround((p.y - region_.ymin - off) / d));
        for (int r = r0 - 1; r <= r0 + 1; ++r) {
            const HexId id{r, q};
            const Point c = center(id);
            const double d2 = (p.x - c.x) * (p.x - c.x) + (p.y - c.y) * (p.y - c.y);
            if (d2 < best_d2 - tie || (d2 <= best_d2 + tie && id < best)) {
                best = id;
                best_d2 = d2;
            }
        }
    }
    return best;
}

HexId HexGrid::assign(Point p) const
{
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        throw InvalidArgument("cannot assign a non-finite point to a hexagon");
    }
    const HexId id = nearest(p);
    if (!contains(id)) {
        throw InvalidArgument("point (" + std::to_string(p.x) + ", " + std::to_string(p.y)
                              + ") lies outside the hexagon tessellation");
    }
    return id;
}

std::vector<HexId> assign(std::span<const Point> points, const HexGrid& grid)
{
    std::vector<HexId> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        out.push_back(grid.assign(p));
    }
    return out;
}

std::vector<HexAggregate> aggregate_pairs(std::span<const Point> locations, std::span<const double> y,
                                          std::span<const double> yhat, const HexGrid& grid)
{
    if (locations.size() != y.size() || y.size() != yhat.size()) {
        throw InvalidArgument("aggregate_pairs: locations, y and yhat differ in length");
    }
    struct Acc {
        std::size_t n = 0;
        double y = 0.0;
        double yhat = 0.0;
    };
    std::map<HexId, Acc> acc;
    for (std::size_t i = 0; i < locations.size(); ++i) {
        auto& a = acc[grid.assign(locations[i])];
        ++a.n;
        a.y += y[i];
        a.yhat += yhat[i];
    }
    std::vector<HexAggregate> out;
    out.reserve(acc.size());
    for (const auto& [id, a] : acc) {
        const auto n = static_cast<double>(a.n);
        out.push_back({id, a.n, a.y / n, a.yhat / n});
    }
    return out;
}

} // namespace agbmap
