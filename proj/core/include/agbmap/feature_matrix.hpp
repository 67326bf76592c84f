#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace agbmap {

/// Row-major matrix of finite predictor values with named columns.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::vector<std::string> column_names, std::size_t n_rows);
    FeatureMatrix(std::vector<std::string> column_names, std::vector<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return names_.size(); }
    const std::vector<std::string>& column_names() const { return names_; }

    std::span<const double> row(std::size_t i) const { return {values_.data() + i * cols(), cols()}; }
    std::span<double> row(std::size_t i) { return {values_.data() + i * cols(), cols()}; }
    double at(std::size_t i, std::size_t j) const { return values_[i * cols() + j]; }
    double& at(std::size_t i, std::size_t j) { return values_[i * cols() + j]; }
    const std::vector<double>& values() const { return values_; }

    FeatureMatrix select_rows(std::span<const std::size_t> rows) const;
    /// Throws InvalidArgument if any value is non-finite.
    void validate() const;

private:
    std::vector<std::string> names_;
    std::vector<double> values_;
    std::size_t rows_ = 0;
};

/// Feature table with a response column and optional row ids.
struct LabeledFeatures {
    FeatureMatrix X;
    std::vector<double> y;
    std::vector<std::string> ids;
};

/// Reads a CSV with header row. `target` names the response column; `id_column`
/// (when present in the header) is kept as row ids; every other column in
/// `feature_columns` (or all remaining columns when empty) becomes a feature.
LabeledFeatures read_feature_csv(const std::filesystem::path& path, const std::string& target,
                                 const std::string& id_column = "plot_id",
                                 const std::vector<std::string>& feature_columns = {});

} // namespace agbmap
