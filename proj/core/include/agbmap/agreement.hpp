#pragma once

#include "agbmap/geometry.hpp"
#include "agbmap/hexgrid.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace agbmap {

/// Reference values `y` (treated as truth) paired with predictions `yhat`.
struct PairedSample {
    std::vector<std::string> ids;
    std::vector<double> y;
    std::vector<double> yhat;

    PairedSample() = default;
    PairedSample(std::vector<double> y_, std::vector<double> yhat_, std::vector<std::string> ids_ = {});

    std::size_t size() const { return y.size(); }
    /// Throws InvalidArgument unless lengths match, n >= 1, and values are finite.
    void validate() const;
};

struct MetricsReport {
    std::size_t n = 0;
    double scale_km = 0.0;      // 0 for plot-to-pixel
    std::optional<double> pph;  // plots per hexagon; absent at plot scale
    double rmse = 0.0;
    double mae = 0.0;
    double me = 0.0;            // mean(y - yhat)
    std::optional<double> pct_rmse;
    std::optional<double> pct_mae;
    std::optional<double> r2;   // absent when y has no variance
    std::optional<double> dr;
};

/// RMSE, MAE, ME, R^2 and their percentages of `ybar_train` (absent unless
/// ybar_train > 0). `dr` is left empty; see willmott_dr.
MetricsReport basic_metrics(const PairedSample& pairs, double ybar_train);

/// Willmott's refined index of agreement; nullopt when every y is equal.
std::optional<double> willmott_dr(const PairedSample& pairs, double c = 2.0);

/// Geometric mean functional relationship y' = a + b * yhat with
/// |b| = sqrt(Syy / Syhat) and sign(b) = sign(correlation). yhat_fitted holds the
/// inverse line yhat' = -a/b + y/b evaluated at each y.
struct GmfrFit {
    double a = 0.0;
    double b = 0.0;
    std::vector<double> y_fitted;
    std::vector<double> yhat_fitted;
};

/// Throws InvalidArgument if either variable has zero variance.
GmfrFit gmfr_fit(const PairedSample& pairs);

struct AcDecomposition {
    double ac = 0.0;
    double ac_s = 0.0;
    double ac_u = 0.0;
    double ssd = 0.0;         // sum of squared differences
    double spd_u = 0.0;       // unsystematic sum of product differences
    double denominator = 0.0; // potential sum of product differences
};

/// Agreement coefficient with its systematic and unsystematic parts. Throws
/// InvalidArgument when the denominator vanishes or the GMFR line is undefined.
AcDecomposition ac_decompose(const PairedSample& pairs);

/// Agreement coefficient alone (defined whenever the denominator is positive).
double agreement_coefficient(const PairedSample& pairs);

/// Right-continuous empirical CDF.
class Ecdf {
public:
    explicit Ecdf(std::span<const double> values);

    double operator()(double x) const;
    std::size_t size() const { return sorted_.size(); }
    /// Distinct sample values with F at each.
    std::vector<std::pair<double, double>> table() const;

private:
    std::vector<double> sorted_;
};

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b| over pooled points.
double ks_statistic(std::span<const double> a, std::span<const double> b);

/// Paired sample with a location per pair.
struct LocatedPairs {
    PairedSample pairs;
    std::vector<Point> locations;
};

/// Spacings at or below this (km) compare plots directly with pixels.
inline constexpr double kPassthroughSpacingKm = 1.0;

/// 1 km passthrough plus 2..50 km.
std::vector<double> default_scale_sweep_km();

struct ScaleAssessment {
    double scale_km = 0.0;
    std::size_t n = 0;
    std::optional<double> pph;
    std::optional<MetricsReport> metrics; // absent when fewer than 2 units
    std::vector<HexAggregate> aggregates;  // empty for the passthrough scale
};

/// Metrics at each spacing after hexagon aggregation over `region`; spacings
/// of 1 km or less use plot-level pairs unaggregated.
std::vector<ScaleAssessment> multiscale_assessment(const LocatedPairs& data, std::span<const double> spacings_km,
                                                   double ybar_train, const BBox& region);

struct ScaleAgreement {
    double scale_km = 0.0; // 0 for unaggregated units
    std::size_t n = 0;
    std::optional<AcDecomposition> ac;
};

/// AC decomposition on unaggregated units (scale 0) followed by hexagon means at
/// every requested spacing.
std::vector<ScaleAgreement> multiscale_agreement(const LocatedPairs& data, std::span<const double> spacings_km,
                                                 const BBox& region);

} // namespace agbmap
