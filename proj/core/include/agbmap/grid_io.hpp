#pragma once

#include "agbmap/grid.hpp"

#include <filesystem>
#include <iosfwd>

namespace agbmap {

enum class GridFormat {
    /// JSON header line, little-endian float32 plane, then a uint8 validity plane.
    binary,
    /// ESRI ASCII grid with a NODATA_value sentinel.
    ascii,
};

/// `.asc` selects ASCII; everything else is binary.
GridFormat format_from_path(const std::filesystem::path& path);

Grid read_grid(const std::filesystem::path& path, GridFormat format);
Grid read_grid(const std::filesystem::path& path);

Grid read_grid_binary(std::istream& in);
Grid read_grid_ascii(std::istream& in);

/// ASCII values are written with `ascii_precision` fractional mantissa digits
/// (ascii_precision + 1 significant digits), so relative error is bounded by
/// 0.5 * 10^-ascii_precision. The default of 8 round-trips float32 exactly.
void write_grid(const Grid& grid, const std::filesystem::path& path, GridFormat format, int ascii_precision = 8);
void write_grid(const Grid& grid, const std::filesystem::path& path);

void write_grid_binary(const Grid& grid, std::ostream& out);
void write_grid_ascii(const Grid& grid, std::ostream& out, int precision = 8);

} // namespace agbmap
