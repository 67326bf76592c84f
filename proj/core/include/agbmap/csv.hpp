#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace agbmap {

/// Header-addressed view of a comma-separated file. Fields are trimmed;
/// double-quoted fields may contain commas.
class CsvTable {
public:
    static CsvTable read(const std::filesystem::path& path);
    static CsvTable parse(std::istream& in, const std::string& source = "<stream>");

    const std::vector<std::string>& header() const { return header_; }
    std::size_t rows() const { return rows_.size(); }

    /// Column index; throws FormatError naming the missing column.
    std::size_t column(std::string_view name) const;
    std::optional<std::size_t> find_column(std::string_view name) const;

    const std::string& cell(std::size_t row, std::size_t col) const { return rows_[row][col]; }
    double number(std::size_t row, std::size_t col) const;
    long integer(std::size_t row, std::size_t col) const;
    /// Blank cell -> nullopt.
    std::optional<double> optional_number(std::size_t row, std::size_t col) const;

    const std::string& source() const { return source_; }

private:
    std::string source_;
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

/// Writes one CSV line; numbers are formatted with round-trip precision.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}

    CsvWriter& field(std::string_view text);
    CsvWriter& field(double value);
    CsvWriter& field(long long value);
    CsvWriter& field(int value) { return field(static_cast<long long>(value)); }
    CsvWriter& field(std::size_t value) { return field(static_cast<long long>(value)); }
    CsvWriter& field(const std::optional<double>& value);
    CsvWriter& empty();
    void end_row();

    void row(std::initializer_list<std::string_view> fields);

private:
    void separator();

    std::ostream& out_;
    bool first_ = true;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

} // namespace agbmap
