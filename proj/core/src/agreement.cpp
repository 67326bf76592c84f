#include "agbmap/agreement.hpp"

#include "agbmap/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace agbmap {
namespace {

double mean_of(std::span<const double> v)
{
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

PairedSample from_aggregates(const std::vector<HexAggregate>& aggs)
{
    PairedSample s;
    for (const auto& a : aggs) {
        s.ids.push_back(to_string(a.hex_id));
        s.y.push_back(a.y_mean);
        s.yhat.push_back(a.yhat_mean);
    }
    return s;
}

} // namespace

PairedSample::PairedSample(std::vector<double> y_, std::vector<double> yhat_, std::vector<std::string> ids_)
    : ids(std::move(ids_)), y(std::move(y_)), yhat(std::move(yhat_))
{
    validate();
}

void PairedSample::validate() const
{
    if (y.empty()) {
        throw InvalidArgument("paired sample is empty");
    }
    if (y.size() != yhat.size() || (!ids.empty() && ids.size() != y.size())) {
        throw InvalidArgument("paired sample vectors differ in length");
    }
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!std::isfinite(y[i]) || !std::isfinite(yhat[i])) {
            throw InvalidArgument("paired sample holds a non-finite value");
        }
    }
}

MetricsReport basic_metrics(const PairedSample& pairs, double ybar_train)
{
    pairs.validate();
    const std::size_t n = pairs.size();
    const double nd = static_cast<double>(n);
    const double ybar = mean_of(pairs.y);

    double sse = 0.0, sae = 0.0, se = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = pairs.y[i] - pairs.yhat[i];
        sse += e * e;
        sae += std::abs(e);
        se += e;
        sst += (pairs.y[i] - ybar) * (pairs.y[i] - ybar);
    }

    MetricsReport r;
    r.n = n;
    r.rmse = std::sqrt(sse / nd);
    r.mae = sae / nd;
    r.me = se / nd;
    if (n >= 2 && sst > 0.0) {
        r.r2 = 1.0 - sse / sst;
    }
    if (ybar_train > 0.0) {
        r.pct_rmse = 100.0 * r.rmse / ybar_train;
        r.pct_mae = 100.0 * r.mae / ybar_train;
    }
    return r;
}

std::optional<double> willmott_dr(const PairedSample& pairs, double c)
{
    pairs.validate();
    const double ybar = mean_of(pairs.y);
    double abs_err = 0.0;
    double abs_dev = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        abs_err += std::abs(pairs.yhat[i] - pairs.y[i]);
        abs_dev += std::abs(pairs.y[i] - ybar);
    }
    if (!(abs_dev > 0.0)) {
        return std::nullopt;
    }
    const double scaled = c * abs_dev;
    if (abs_err <= scaled) {
        return 1.0 - abs_err / scaled;
    }
    return scaled / abs_err - 1.0;
}

GmfrFit gmfr_fit(const PairedSample& pairs)
{
    pairs.validate();
    const double ybar = mean_of(pairs.y);
    const double hbar = mean_of(pairs.yhat);
    double syy = 0.0, shh = 0.0, syh = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double dy = pairs.y[i] - ybar;
        const double dh = pairs.yhat[i] - hbar;
        syy += dy * dy;
        shh += dh * dh;
        syh += dy * dh;
    }
    if (!(syy > 0.0) || !(shh > 0.0)) {
        throw InvalidArgument("GMFR needs nonzero variance in both variables");
    }

    GmfrFit fit;
    // Slope of y on yhat; a zero correlation takes the positive branch.
    fit.b = (syh < 0.0 ? -1.0 : 1.0) * std::sqrt(syy / shh);
    fit.a = ybar - fit.b * hbar;
    fit.y_fitted.reserve(pairs.size());
    fit.yhat_fitted.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        fit.y_fitted.push_back(fit.a + fit.b * pairs.yhat[i]);
        fit.yhat_fitted.push_back(-fit.a / fit.b + pairs.y[i] / fit.b);
    }
    return fit;
}

namespace {

double ac_denominator(const PairedSample& pairs, double& ssd)
{
    const double ybar = mean_of(pairs.y);
    const double hbar = mean_of(pairs.yhat);
    const double shift = std::abs(hbar - ybar);
    double denom = 0.0;
    ssd = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double d = pairs.yhat[i] - pairs.y[i];
        ssd += d * d;
        denom += (shift + std::abs(pairs.yhat[i] - hbar)) * (shift + std::abs(pairs.y[i] - ybar));
    }
    if (!(denom > 0.0)) {
        throw InvalidArgument("agreement coefficient undefined: both samples constant and equal");
    }
    return denom;
}

} // namespace

double agreement_coefficient(const PairedSample& pairs)
{
    pairs.validate();
    double ssd = 0.0;
    const double denom = ac_denominator(pairs, ssd);
    return 1.0 - ssd / denom;
}

AcDecomposition ac_decompose(const PairedSample& pairs)
{
    pairs.validate();
    AcDecomposition r;
    r.denominator = ac_denominator(pairs, r.ssd);
    const auto fit = gmfr_fit(pairs);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        r.spd_u += std::abs(pairs.yhat[i] - fit.yhat_fitted[i]) * std::abs(pairs.y[i] - fit.y_fitted[i]);
    }
    r.ac = 1.0 - r.ssd / r.denominator;
    r.ac_u = 1.0 - r.spd_u / r.denominator;
    r.ac_s = 1.0 - (r.ssd - r.spd_u) / r.denominator;
    return r;
}

Ecdf::Ecdf(std::span<const double> values) : sorted_(values.begin(), values.end())
{
    if (sorted_.empty()) {
        throw InvalidArgument("ECDF of an empty sample");
    }
    std::sort(sorted_.begin(), sorted_.end());
}

double Ecdf::operator()(double x) const
{
    const auto at_or_below = std::upper_bound(sorted_.begin(), sorted_.end(), x) - sorted_.begin();
    return static_cast<double>(at_or_below) / static_cast<double>(sorted_.size());
}

std::vector<std::pair<double, double>> Ecdf::table() const
{
    std::vector<std::pair<double, double>> out;
    const double n = static_cast<double>(sorted_.size());
    for (std::size_t i = 0; i < sorted_.size(); ++i) {
        if (i + 1 < sorted_.size() && sorted_[i + 1] == sorted_[i]) {
            continue;
        }
        out.emplace_back(sorted_[i], static_cast<double>(i + 1) / n);
    }
    return out;
}

double ks_statistic(std::span<const double> a, std::span<const double> b)
{
    if (a.empty() || b.empty()) {
        throw InvalidArgument("KS statistic needs two nonempty samples");
    }
    std::vector<double> sa(a.begin(), a.end());
    std::vector<double> sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    const double na = static_cast<double>(sa.size());
    const double nb = static_cast<double>(sb.size());

    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < sa.size() || j < sb.size()) {
        // Next pooled value; consume every copy of it from both samples.
        double x;
        if (j >= sb.size() || (i < sa.size() && sa[i] <= sb[j])) {
            x = sa[i];
        } else {
            x = sb[j];
        }
        while (i < sa.size() && sa[i] == x) {
            ++i;
        }
        while (j < sb.size() && sb[j] == x) {
            ++j;
        }
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

std::vector<double> default_scale_sweep_km() { return {1, 2, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50}; }

std::vector<ScaleAssessment> multiscale_assessment(const LocatedPairs& data, std::span<const double> spacings_km,
                                                   double ybar_train, const BBox& region)
{
    data.pairs.validate();
    if (data.locations.size() != data.pairs.size()) {
        throw InvalidArgument("multiscale_assessment: one location per pair required");
    }
    if (spacings_km.empty()) {
        throw InvalidArgument("multiscale_assessment: no spacings given");
    }

    std::vector<ScaleAssessment> out;
    for (const double km : spacings_km) {
        ScaleAssessment s;
        s.scale_km = km;
        PairedSample units;
        if (km <= kPassthroughSpacingKm) {
            units = data.pairs;
        } else {
            const HexGrid hex(region, km * 1000.0);
            s.aggregates = aggregate_pairs(data.locations, data.pairs.y, data.pairs.yhat, hex);
            units = from_aggregates(s.aggregates);
            s.pph = static_cast<double>(data.pairs.size()) / static_cast<double>(s.aggregates.size());
        }
        s.n = units.size();
        if (s.n >= 2) {
            auto m = basic_metrics(units, ybar_train);
            m.scale_km = km;
            m.pph = s.pph;
            m.dr = willmott_dr(units);
            s.metrics = m;
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<ScaleAgreement> multiscale_agreement(const LocatedPairs& data, std::span<const double> spacings_km,
                                                 const BBox& region)
{
    data.pairs.validate();
    if (data.locations.size() != data.pairs.size()) {
        throw InvalidArgument("multiscale_agreement: one location per pair required");
    }

    auto evaluate = [](const PairedSample& units) -> std::optional<AcDecomposition> {
        if (units.size() < 2) {
            return std::nullopt;
        }
        try {
            return ac_decompose(units);
        } catch (const InvalidArgument&) {
            return std::nullopt;
        }
    };

    std::vector<ScaleAgreement> out;
    out.push_back({0.0, data.pairs.size(), evaluate(data.pairs)});
    for (const double km : spacings_km) {
        const HexGrid hex(region, km * 1000.0);
        const auto units = from_aggregates(aggregate_pairs(data.locations, data.pairs.y, data.pairs.yhat, hex));
        out.push_back({km, units.size(), evaluate(units)});
    }
    return out;
}

} // namespace agbmap
