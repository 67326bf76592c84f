#pragma once

#include "agbmap/geometry.hpp"

#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace agbmap {

/// Offset coordinates of a flat-top hexagon: `col` is the column index (x
/// direction), `row` counts hexagons upward within the column. Odd columns sit
/// half a spacing higher than even ones.
struct HexId {
    int row = 0;
    int col = 0;

    auto operator<=>(const HexId&) const = default;
};

std::string to_string(HexId id);

struct HexCell {
    HexId id;
    Point center;
};

/// Regular flat-top hexagonal tessellation with centroid spacing `spacing`,
/// anchored with the (0,0) centroid on the lower-left corner of `region`. Holds
/// every hexagon that touches the region.
class HexGrid {
public:
    HexGrid(BBox region, double spacing);

    double spacing() const { return spacing_; }
    const BBox& region() const { return region_; }
    Point origin() const { return {region_.xmin, region_.ymin}; }
    /// Center-to-vertex distance: spacing / sqrt(3).
    double circumradius() const;
    /// sqrt(3)/2 * spacing^2.
    double cell_area() const;

    const std::vector<HexCell>& cells() const { return cells_; }
    Point center(HexId id) const;
    bool contains(HexId id) const;

    /// Hexagon holding `p` (its nearest centroid). Equidistant points go to the
    /// lowest (row, col). Throws InvalidArgument when that hexagon is not part of
    /// the tessellation.
    HexId assign(Point p) const;

private:
    HexId nearest(Point p) const;
    bool touches_region(Point c) const;

    BBox region_;
    double spacing_ = 0.0;
    std::vector<HexCell> cells_;
};

std::vector<HexId> assign(std::span<const Point> points, const HexGrid& grid);

struct HexAggregate {
    HexId hex_id;
    std::size_t n_members = 0;
    double y_mean = 0.0;
    double yhat_mean = 0.0;
};

/// Unweighted means of member values for every hexagon that holds at least one
/// point, ordered by hex id.
std::vector<HexAggregate> aggregate_pairs(std::span<const Point> locations, std::span<const double> y,
                                          std::span<const double> yhat, const HexGrid& grid);

} // namespace agbmap
