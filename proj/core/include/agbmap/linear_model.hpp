#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace agbmap {

/// Ordinary least squares with intercept.
struct OlsFit {
    double intercept = 0.0;
    std::vector<double> coefficients;
    std::size_t rank = 0;
    /// Set when a covariate is constant or the covariates are collinear; the
    /// coefficients are then the minimum-norm solution on standardized columns.
    bool rank_deficient = false;

    double predict(std::span<const double> x) const;
};

/// Fits y ~ 1 + columns. Columns are centered and scaled to unit norm, the
/// normal equations are formed and solved with a complete orthogonal
/// decomposition; ranks below the column count (relative threshold 1e-10) set
/// `rank_deficient`.
OlsFit fit_ols(const std::vector<std::vector<double>>& columns, std::span<const double> y);

} // namespace agbmap
