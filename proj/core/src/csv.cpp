#include "agbmap/csv.hpp"

#include "agbmap/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace agbmap {
namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

} // namespace

CsvTable CsvTable::read(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return parse(in, path.string());
}

CsvTable CsvTable::parse(std::istream& in, const std::string& source)
{
    CsvTable t;
    t.source_ = source;
    std::string line;
    bool header_seen = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        auto fields = split_line(line);
        if (!header_seen) {
            if (!fields.empty() && fields[0].starts_with("\xEF\xBB\xBF")) {
                fields[0].erase(0, 3);
            }
            t.header_ = std::move(fields);
            header_seen = true;
            continue;
        }
        if (fields.size() != t.header_.size()) {
            throw FormatError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header_.size())
                              + " fields, found " + std::to_string(fields.size()));
        }
        t.rows_.push_back(std::move(fields));
    }
    if (!header_seen) {
        throw FormatError(source + ": missing header row");
    }
    return t;
}

std::optional<std::size_t> CsvTable::find_column(std::string_view name) const
{
    for (std::size_t i = 0; i < header_.size(); ++i) {
        if (header_[i] == name) {
            return i;
        }
    }
    return std::nullopt;
}

std::size_t CsvTable::column(std::string_view name) const
{
    if (auto c = find_column(name)) {
        return *c;
    }
    throw FormatError(source_ + ": missing column '" + std::string(name) + "'");
}

double CsvTable::number(std::size_t row, std::size_t col) const
{
    const auto& s = rows_[row][col];
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw FormatError(source_ + ": row " + std::to_string(row + 1) + ", column '" + header_[col]
                          + "': not a finite number: '" + s + "'");
    }
    return v;
}

long CsvTable::integer(std::size_t row, std::size_t col) const
{
    const auto& s = rows_[row][col];
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw FormatError(source_ + ": row " + std::to_string(row + 1) + ", column '" + header_[col]
                          + "': not an integer: '" + s + "'");
    }
    return v;
}

std::optional<double> CsvTable::optional_number(std::size_t row, std::size_t col) const
{
    if (rows_[row][col].empty() || rows_[row][col] == "NA") {
        return std::nullopt;
    }
    return number(row, col);
}

std::string format_double(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

void CsvWriter::separator()
{
    if (!first_) {
        out_ << ',';
    }
    first_ = false;
}

CsvWriter& CsvWriter::field(std::string_view text)
{
    separator();
    if (text.find_first_of(",\"\n") != std::string_view::npos) {
        out_ << '"';
        for (char c : text) {
            if (c == '"') {
                out_ << '"';
            }
            out_ << c;
        }
        out_ << '"';
    } else {
        out_ << text;
    }
    return *this;
}

CsvWriter& CsvWriter::field(double value)
{
    separator();
    out_ << format_double(value);
    return *this;
}

CsvWriter& CsvWriter::field(long long value)
{
    separator();
    out_ << value;
    return *this;
}

CsvWriter& CsvWriter::field(const std::optional<double>& value)
{
    if (value) {
        return field(*value);
    }
    return empty();
}

CsvWriter& CsvWriter::empty()
{
    separator();
    return *this;
}

void CsvWriter::end_row()
{
    out_ << '\n';
    first_ = true;
}

void CsvWriter::row(std::initializer_list<std::string_view> fields)
{
    for (auto f : fields) {
        field(f);
    }
    end_row();
}

} // namespace agbmap
