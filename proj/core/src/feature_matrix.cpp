#include "agbmap/feature_matrix.hpp"

#include "agbmap/csv.hpp"
#include "agbmap/error.hpp"

#include <algorithm>
#include <cmath>

namespace agbmap {

FeatureMatrix::FeatureMatrix(std::vector<std::string> column_names, std::size_t n_rows)
    : names_(std::move(column_names)), values_(n_rows * names_.size(), 0.0), rows_(n_rows)
{
}

FeatureMatrix::FeatureMatrix(std::vector<std::string> column_names, std::vector<double> values)
    : names_(std::move(column_names)), values_(std::move(values))
{
    if (names_.empty()) {
        throw InvalidArgument("feature matrix needs at least one column");
    }
    if (values_.size() % names_.size() != 0) {
        throw InvalidArgument("feature values are not a whole number of rows");
    }
    rows_ = values_.size() / names_.size();
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const
{
    FeatureMatrix out(names_, rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

void FeatureMatrix::validate() const
{
    for (double v : values_) {
        if (!std::isfinite(v)) {
            throw InvalidArgument("feature matrix holds a non-finite value");
        }
    }
}

LabeledFeatures read_feature_csv(const std::filesystem::path& path, const std::string& target,
                                 const std::string& id_column, const std::vector<std::string>& feature_columns)
{
    const auto table = CsvTable::read(path);
    const auto c_target = table.column(target);
    const auto c_id = table.find_column(id_column);

    std::vector<std::size_t> feature_idx;
    std::vector<std::string> names;
    if (feature_columns.empty()) {
        for (std::size_t c = 0; c < table.header().size(); ++c) {
            if (c != c_target && (!c_id || c != *c_id)) {
                feature_idx.push_back(c);
                names.push_back(table.header()[c]);
            }
        }
    } else {
        for (const auto& name : feature_columns) {
            feature_idx.push_back(table.column(name));
            names.push_back(name);
        }
    }
    if (names.empty()) {
        throw FormatError(path.string() + ": no feature columns");
    }

    LabeledFeatures out;
    out.X = FeatureMatrix(names, table.rows());
    for (std::size_t r = 0; r < table.rows(); ++r) {
        for (std::size_t j = 0; j < feature_idx.size(); ++j) {
            out.X.at(r, j) = table.number(r, feature_idx[j]);
        }
        out.y.push_back(table.number(r, c_target));
        out.ids.push_back(c_id ? table.cell(r, *c_id) : std::to_string(r));
    }
    return out;
}

} // namespace agbmap
