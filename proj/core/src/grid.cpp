#include "agbmap/grid.hpp"

#include "agbmap/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace agbmap {

void GridGeometry::validate() const
{
    if (ncols < 1 || nrows < 1) {
        throw InvalidArgument("grid must have at least one row and one column");
    }
    if (!(cellsize > 0.0) || !std::isfinite(cellsize)) {
        throw InvalidArgument("grid cellsize must be positive");
    }
    if (!std::isfinite(x_origin) || !std::isfinite(y_origin)) {
        throw InvalidArgument("grid origin must be finite");
    }
}

Grid::Grid(GridGeometry geometry, std::string units)
    : geometry_(geometry), units_(std::move(units))
{
    geometry_.validate();
    values_.assign(geometry_.cell_count(), 0.0f);
    mask_.assign(geometry_.cell_count(), 0);
}

Grid::Grid(GridGeometry geometry, float fill, std::string units)
    : geometry_(geometry), units_(std::move(units))
{
    geometry_.validate();
    if (!std::isfinite(fill)) {
        throw InvalidArgument("grid fill value must be finite");
    }
    values_.assign(geometry_.cell_count(), fill);
    mask_.assign(geometry_.cell_count(), 1);
}

std::optional<float> Grid::at(int col, int row) const
{
    if (col < 0 || row < 0 || col >= ncols() || row >= nrows()) {
        return std::nullopt;
    }
    const auto i = index(col, row);
    if (!valid(i)) {
        return std::nullopt;
    }
    return values_[i];
}

void Grid::set(std::size_t i, float v)
{
    if (!std::isfinite(v)) {
        throw InvalidArgument("grid values must be finite; mask the cell instead");
    }
    values_[i] = v;
    mask_[i] = 1;
}

void Grid::mask(std::size_t i)
{
    values_[i] = 0.0f;
    mask_[i] = 0;
}

std::size_t Grid::count_valid() const
{
    return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

void require_aligned(const Grid& a, const Grid& b, const char* operation)
{
    if (!aligned(a.geometry(), b.geometry())) {
        throw AlignmentError(std::string(operation) + ": grids are not aligned");
    }
}

Grid mask_landcover(const Grid& pred, const Grid& landcover, const std::set<int>& removed_classes)
{
    require_aligned(pred, landcover, "mask_landcover");
    Grid out = pred;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!landcover.valid(i)) {
            out.mask(i);
            continue;
        }
        const auto cls = static_cast<int>(std::lround(landcover.value(i)));
        if (removed_classes.contains(cls)) {
            out.mask(i);
        }
    }
    return out;
}

Grid difference(const Grid& a, const Grid& b)
{
    require_aligned(a, b, "difference");
    Grid out(a.geometry(), a.units());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (a.valid(i) && b.valid(i)) {
            out.set(i, a.value(i) - b.value(i));
        }
    }
    return out;
}

Grid percent_rank(const Grid& grid)
{
    std::vector<float> sorted;
    sorted.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid.valid(i)) {
            sorted.push_back(grid.value(i));
        }
    }
    if (sorted.size() < 2) {
        throw InvalidArgument("percent_rank needs at least two valid cells");
    }
    std::sort(sorted.begin(), sorted.end());
    const double denom = static_cast<double>(sorted.size() - 1);

    Grid out(grid.geometry(), "percent");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!grid.valid(i)) {
            continue;
        }
        // lower_bound position == minimum rank - 1
        const auto below = std::lower_bound(sorted.begin(), sorted.end(), grid.value(i)) - sorted.begin();
        out.set(i, static_cast<float>(100.0 * static_cast<double>(below) / denom));
    }
    return out;
}

GridSummary summarize(const Grid& grid)
{
    GridSummary s;
    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!grid.valid(i)) {
            continue;
        }
        const double v = grid.value(i);
        ++s.n_valid;
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (s.n_valid > 0) {
        s.sum = sum;
        s.mean = sum / static_cast<double>(s.n_valid);
        s.min = lo;
        s.max = hi;
    }
    return s;
}

Grid cap_values(const Grid& grid, double limit)
{
    if (!(limit > 0.0)) {
        throw InvalidArgument("cap limit must be positive");
    }
    Grid out = grid;
    const auto lim = static_cast<float>(limit);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.valid(i)) {
            out.set(i, std::clamp(out.value(i), -lim, lim));
        }
    }
    return out;
}

} // namespace agbmap
