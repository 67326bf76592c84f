#include "agbmap/grid_io.hpp"

#include "agbmap/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_set>

namespace agbmap {
namespace {

std::uint32_t to_little(std::uint32_t v)
{
    if constexpr (std::endian::native == std::endian::big) {
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
    return v;
}

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

double parse_double(const std::string& token, const char* what)
{
    double v = 0.0;
    const auto* first = token.data();
    const auto* last = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) {
        throw FormatError(std::string("cannot parse ") + what + " '" + token + "'");
    }
    return v;
}

std::string format_number(double v, int significant)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", significant, v);
    return buf;
}

} // namespace

GridFormat format_from_path(const std::filesystem::path& path)
{
    return lower(path.extension().string()) == ".asc" ? GridFormat::ascii : GridFormat::binary;
}

// ---------------------------------------------------------------------------
// binary

Grid read_grid_binary(std::istream& in)
{
    std::string header_line;
    if (!std::getline(in, header_line)) {
        throw FormatError("binary grid: missing header line");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("binary grid: malformed header: ") + e.what());
    }

    GridGeometry geom;
    std::string units;
    try {
        if (header.at("byte_order").get<std::string>() != "little") {
            throw FormatError("binary grid: unsupported byte_order");
        }
        geom.ncols = header.at("ncols").get<int>();
        geom.nrows = header.at("nrows").get<int>();
        geom.x_origin = header.at("x_origin").get<double>();
        geom.y_origin = header.at("y_origin").get<double>();
        geom.cellsize = header.at("cellsize").get<double>();
        units = header.value("units", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("binary grid: bad header field: ") + e.what());
    }
    try {
        geom.validate();
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("binary grid: ") + e.what());
    }

    const std::size_t n = geom.cell_count();
    std::vector<std::uint32_t> raw(n);
    std::vector<std::uint8_t> mask(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * sizeof(std::uint32_t)));
    if (static_cast<std::size_t>(in.gcount()) != n * sizeof(std::uint32_t)) {
        throw FormatError("binary grid: value plane shorter than ncols*nrows");
    }
    in.read(reinterpret_cast<char*>(mask.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw FormatError("binary grid: mask plane shorter than ncols*nrows");
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw FormatError("binary grid: trailing bytes after mask plane");
    }

    Grid grid(geom, units);
    for (std::size_t i = 0; i < n; ++i) {
        if (mask[i] > 1) {
            throw FormatError("binary grid: mask bytes must be 0 or 1");
        }
        if (mask[i] == 0) {
            continue;
        }
        const auto bits = to_little(raw[i]);
        const auto v = std::bit_cast<float>(bits);
        if (!std::isfinite(v)) {
            throw FormatError("binary grid: non-finite value in a valid cell");
        }
        grid.set(i, v);
    }
    return grid;
}

void write_grid_binary(const Grid& grid, std::ostream& out)
{
    const auto& g = grid.geometry();
    // Keys are emitted in sorted order, which keeps the header byte-stable.
    nlohmann::json header = {
        {"ncols", g.ncols},       {"nrows", g.nrows},       {"x_origin", g.x_origin},
        {"y_origin", g.y_origin}, {"cellsize", g.cellsize}, {"units", grid.units()},
        {"byte_order", "little"},
    };
    out << header.dump() << '\n';

    std::vector<std::uint32_t> raw(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const float v = grid.valid(i) ? grid.value(i) : 0.0f;
        raw[i] = to_little(std::bit_cast<std::uint32_t>(v));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(std::uint32_t)));
    const auto& mask = grid.mask_plane();
    out.write(reinterpret_cast<const char*>(mask.data()), static_cast<std::streamsize>(mask.size()));
}

// ---------------------------------------------------------------------------
// ascii

Grid read_grid_ascii(std::istream& in)
{
    GridGeometry geom;
    bool have_ncols = false, have_nrows = false, have_x = false, have_y = false, have_cs = false;
    bool x_center = false, y_center = false;
    double nodata = -9999.0;

    std::string token;
    std::string first_value;
    while (in >> token) {
        if (!std::isalpha(static_cast<unsigned char>(token[0]))) {
            first_value = token;
            break;
        }
        const auto key = lower(token);
        std::string value;
        if (!(in >> value)) {
            throw FormatError("ascii grid: header key '" + token + "' has no value");
        }
        if (key == "ncols") {
            geom.ncols = static_cast<int>(parse_double(value, "ncols"));
            have_ncols = true;
        } else if (key == "nrows") {
            geom.nrows = static_cast<int>(parse_double(value, "nrows"));
            have_nrows = true;
        } else if (key == "xllcorner" || key == "xllcenter") {
            geom.x_origin = parse_double(value, key.c_str());
            x_center = key == "xllcenter";
            have_x = true;
        } else if (key == "yllcorner" || key == "yllcenter") {
            geom.y_origin = parse_double(value, key.c_str());
            y_center = key == "yllcenter";
            have_y = true;
        } else if (key == "cellsize") {
            geom.cellsize = parse_double(value, "cellsize");
            have_cs = true;
        } else if (key == "nodata_value") {
            nodata = parse_double(value, "NODATA_value");
        } else {
            throw FormatError("ascii grid: unknown header key '" + token + "'");
        }
    }
    if (!(have_ncols && have_nrows && have_x && have_y && have_cs)) {
        throw FormatError("ascii grid: header must declare ncols, nrows, xllcorner, yllcorner, cellsize");
    }
    if (x_center) {
        geom.x_origin -= geom.cellsize / 2.0;
    }
    if (y_center) {
        geom.y_origin -= geom.cellsize / 2.0;
    }
    try {
        geom.validate();
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("ascii grid: ") + e.what());
    }

    Grid grid(geom);
    const std::size_t n = geom.cell_count();
    std::size_t i = 0;
    auto consume = [&](const std::string& tok) {
        if (i >= n) {
            throw FormatError("ascii grid: more values than ncols*nrows");
        }
        const double v = parse_double(tok, "cell value");
        if (v == nodata) {
            ++i;
            return;
        }
        if (!std::isfinite(v) || !std::isfinite(static_cast<float>(v))) {
            throw FormatError("ascii grid: non-finite value '" + tok + "'");
        }
        grid.set(i++, static_cast<float>(v));
    };
    if (!first_value.empty()) {
        consume(first_value);
        while (in >> token) {
            consume(token);
        }
    }
    if (i != n) {
        throw FormatError("ascii grid: expected " + std::to_string(n) + " values, found " + std::to_string(i));
    }
    return grid;
}

void write_grid_ascii(const Grid& grid, std::ostream& out, int precision)
{
    if (precision < 0 || precision > 16) {
        throw InvalidArgument("ascii precision must lie in [0, 16]");
    }
    const int significant = precision + 1;

    std::unordered_set<std::string> used;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid.valid(i)) {
            used.insert(format_number(grid.value(i), significant));
        }
    }
    double nodata = -9999.0;
    while (used.contains(format_number(nodata, significant))) {
        nodata = nodata * 10.0 - 9.0;
    }

    const auto& g = grid.geometry();
    out << "ncols " << g.ncols << '\n'
        << "nrows " << g.nrows << '\n'
        << "xllcorner " << format_number(g.x_origin, 17) << '\n'
        << "yllcorner " << format_number(g.y_origin, 17) << '\n'
        << "cellsize " << format_number(g.cellsize, 17) << '\n'
        << "NODATA_value " << format_number(nodata, significant) << '\n';
    for (int r = 0; r < g.nrows; ++r) {
        for (int c = 0; c < g.ncols; ++c) {
            if (c > 0) {
                out << ' ';
            }
            const auto i = grid.index(c, r);
            out << (grid.valid(i) ? format_number(grid.value(i), significant) : format_number(nodata, significant));
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// files

Grid read_grid(const std::filesystem::path& path, GridFormat format)
{
    std::ifstream in(path, format == GridFormat::binary ? std::ios::binary : std::ios::in);
    if (!in) {
        throw Error("cannot open grid file " + path.string());
    }
    try {
        return format == GridFormat::binary ? read_grid_binary(in) : read_grid_ascii(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

Grid read_grid(const std::filesystem::path& path) { return read_grid(path, format_from_path(path)); }

void write_grid(const Grid& grid, const std::filesystem::path& path, GridFormat format, int ascii_precision)
{
    std::ofstream out(path, format == GridFormat::binary ? std::ios::binary : std::ios::out);
    if (!out) {
        throw Error("cannot write grid file " + path.string());
    }
    if (format == GridFormat::binary) {
        write_grid_binary(grid, out);
    } else {
        write_grid_ascii(grid, out, ascii_precision);
    }
    if (!out) {
        throw Error("write failed for " + path.string());
    }
}

void write_grid(const Grid& grid, const std::filesystem::path& path)
{
    write_grid(grid, path, format_from_path(path));
}

} // namespace agbmap
