#pragma once

#include "agbmap/geometry.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace agbmap {

/// Georeferencing of a single-band raster. Rows are stored north to south,
/// columns west to east; (x_origin, y_origin) is the south-west corner.
struct GridGeometry {
    int ncols = 0;
    int nrows = 0;
    double x_origin = 0.0;
    double y_origin = 0.0;
    double cellsize = 0.0;

    std::size_t cell_count() const { return static_cast<std::size_t>(ncols) * static_cast<std::size_t>(nrows); }
    double x_max() const { return x_origin + ncols * cellsize; }
    double y_max() const { return y_origin + nrows * cellsize; }
    BBox extent() const { return {x_origin, y_origin, x_max(), y_max()}; }
    /// Area of the full extent in hectares.
    double area_ha() const { return static_cast<double>(cell_count()) * cellsize * cellsize / 10000.0; }
    Point cell_center(int col, int row) const
    {
        return {x_origin + (col + 0.5) * cellsize, y_max() - (row + 0.5) * cellsize};
    }
    /// Throws InvalidArgument unless ncols, nrows >= 1 and cellsize > 0.
    void validate() const;

    friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

/// True iff all five geometry fields are equal.
inline bool aligned(const GridGeometry& a, const GridGeometry& b) { return a == b; }

/// Single-band raster of 32-bit floats with an explicit validity mask.
/// Every cell is either masked or holds a finite value.
class Grid {
public:
    Grid() = default;
    /// Fully masked grid.
    explicit Grid(GridGeometry geometry, std::string units = {});
    /// Grid filled with `fill` and every cell valid.
    Grid(GridGeometry geometry, float fill, std::string units = {});

    const GridGeometry& geometry() const { return geometry_; }
    int ncols() const { return geometry_.ncols; }
    int nrows() const { return geometry_.nrows; }
    const std::string& units() const { return units_; }
    void set_units(std::string units) { units_ = std::move(units); }

    std::size_t index(int col, int row) const
    {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(geometry_.ncols) + static_cast<std::size_t>(col);
    }
    bool valid(std::size_t i) const { return mask_[i] != 0; }
    bool valid(int col, int row) const { return valid(index(col, row)); }
    float value(std::size_t i) const { return values_[i]; }
    float value(int col, int row) const { return values_[index(col, row)]; }
    std::optional<float> at(int col, int row) const;

    /// Sets a valid cell. Throws InvalidArgument on non-finite input.
    void set(std::size_t i, float v);
    void set(int col, int row, float v) { set(index(col, row), v); }
    void mask(std::size_t i);
    void mask(int col, int row) { mask(index(col, row)); }

    std::size_t size() const { return values_.size(); }
    std::size_t count_valid() const;

    /// Raw planes; masked cells carry 0 in the value plane.
    const std::vector<float>& values() const { return values_; }
    const std::vector<std::uint8_t>& mask_plane() const { return mask_; }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    GridGeometry geometry_{};
    std::string units_;
    std::vector<float> values_;
    std::vector<std::uint8_t> mask_;
};

/// Statistics over valid cells; all absent when n_valid == 0.
struct GridSummary {
    std::size_t n_valid = 0;
    std::optional<double> mean;
    std::optional<double> min;
    std::optional<double> max;
    std::optional<double> sum;
};

/// Throws AlignmentError if the two grids differ in geometry.
void require_aligned(const Grid& a, const Grid& b, const char* operation);

/// Masks `pred` wherever `landcover` is masked or carries one of `removed_classes`.
Grid mask_landcover(const Grid& pred, const Grid& landcover, const std::set<int>& removed_classes);

/// Cell-wise a - b; masked where either operand is masked.
Grid difference(const Grid& a, const Grid& b);

/// 100 * (rank - 1) / (n_valid - 1) with minimum rank for ties.
/// Throws InvalidArgument when fewer than two cells are valid.
Grid percent_rank(const Grid& grid);

GridSummary summarize(const Grid& grid);

/// Clamps valid values into [-limit, limit]. Display helper only.
Grid cap_values(const Grid& grid, double limit);

} // namespace agbmap
