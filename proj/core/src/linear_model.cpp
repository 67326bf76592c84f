#include "agbmap/linear_model.hpp"

#include "agbmap/error.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace agbmap {

double OlsFit::predict(std::span<const double> x) const
{
    if (x.size() != coefficients.size()) {
        throw InvalidArgument("OLS predict: wrong number of covariates");
    }
    double v = intercept;
    for (std::size_t j = 0; j < x.size(); ++j) {
        v += coefficients[j] * x[j];
    }
    return v;
}

OlsFit fit_ols(const std::vector<std::vector<double>>& columns, std::span<const double> y)
{
    const std::size_t n = y.size();
    const std::size_t p = columns.size();
    if (n == 0) {
        throw InvalidArgument("OLS: no observations");
    }
    for (const auto& c : columns) {
        if (c.size() != n) {
            throw InvalidArgument("OLS: column length differs from response length");
        }
    }

    double ybar = 0.0;
    for (double v : y) {
        ybar += v;
    }
    ybar /= static_cast<double>(n);

    std::vector<double> means(p, 0.0);
    std::vector<double> scales(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        double m = 0.0;
        for (double v : columns[j]) {
            m += v;
        }
        m /= static_cast<double>(n);
        double ss = 0.0;
        for (double v : columns[j]) {
            ss += (v - m) * (v - m);
        }
        means[j] = m;
        scales[j] = std::sqrt(ss);
    }

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    std::vector<double> z(p);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            z[j] = scales[j] > 0.0 ? (columns[j][i] - means[j]) / scales[j] : 0.0;
        }
        const double yc = y[i] - ybar;
        for (std::size_t j = 0; j < p; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            rhs(jj) += z[j] * yc;
            for (std::size_t k = 0; k <= j; ++k) {
                gram(jj, static_cast<Eigen::Index>(k)) += z[j] * z[k];
            }
        }
    }
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();

    OlsFit fit;
    fit.coefficients.assign(p, 0.0);
    if (p > 0) {
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
        cod.setThreshold(1e-10);
        cod.compute(gram);
        const Eigen::VectorXd beta = cod.solve(rhs);
        fit.rank = static_cast<std::size_t>(cod.rank());
        for (std::size_t j = 0; j < p; ++j) {
            if (scales[j] > 0.0) {
                fit.coefficients[j] = beta(static_cast<Eigen::Index>(j)) / scales[j];
            }
        }
    }
    fit.rank_deficient = fit.rank < p;
    fit.intercept = ybar;
    for (std::size_t j = 0; j < p; ++j) {
        fit.intercept -= fit.coefficients[j] * means[j];
    }
    return fit;
}

} // namespace agbmap
