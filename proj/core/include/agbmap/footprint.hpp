#pragma once

#include "agbmap/geometry.hpp"
#include "agbmap/grid.hpp"

#include <array>
#include <optional>
#include <vector>

namespace agbmap {

/// Four-subplot FIA plot layout. Subplot 1 sits on the plot center; subplots 2, 3
/// and 4 lie 36.6 m away at azimuths 360, 120 and 240 degrees (clockwise from
/// north).
struct PlotFootprint {
    Point center;
    std::array<Point, 4> subplot_centers{};
    double subplot_radius = 7.32;

    explicit PlotFootprint(Point center);

    double area_m2() const;
};

std::array<Point, 4> subplot_centers(Point center);

struct CellWeight {
    int col = 0;
    int row = 0;
    double weight = 0.0; // m^2 of footprint inside the cell

    friend bool operator==(const CellWeight&, const CellWeight&) = default;
};

/// Cells overlapped by the footprint, sorted by (row, col). Weights are exact
/// circle-square intersection areas. Cells outside the grid are dropped, so the
/// total is below the footprint area when the plot hangs off the edge.
using OverlapWeights = std::vector<CellWeight>;

OverlapWeights pixel_overlap_weights(const PlotFootprint& fp, const GridGeometry& geom);

/// Area of the disk (center, radius) inside the rectangle [x0,x1] x [y0,y1].
double circle_rect_intersection(Point center, double radius, double x0, double x1, double y0, double y1);

/// Sum(w * v) / Sum(w) over valid cells; nullopt when every weighted cell is masked.
std::optional<double> extract_weighted_mean(const Grid& grid, const OverlapWeights& weights);
std::optional<double> extract_weighted_mean(const Grid& grid, const PlotFootprint& fp);

} // namespace agbmap
