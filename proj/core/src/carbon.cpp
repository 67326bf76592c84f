#include "agbmap/carbon.hpp"

#include "agbmap/csv.hpp"
#include "agbmap/error.hpp"
#include "agbmap/linear_model.hpp"
#include "agbmap/rng.hpp"

#include <cmath>
#include <numeric>

namespace agbmap {

std::string_view to_string(StockMethod m) { return m == StockMethod::design ? "design" : "model"; }
std::string_view to_string(StockQuantity q) { return q == StockQuantity::agb ? "AGB" : "AGC"; }

StockEstimate model_stock(const Grid& agb, int year, Allometry allometry, AreaBasis basis)
{
    const auto s = summarize(agb);
    if (s.n_valid == 0) {
        throw InvalidArgument("model_stock: grid has no valid cells");
    }
    const auto& g = agb.geometry();
    const double cell_ha = g.cellsize * g.cellsize / 10000.0;
    const double area = basis == AreaBasis::full_extent ? g.area_ha() : static_cast<double>(s.n_valid) * cell_ha;
    return {year, StockMethod::model, allometry, StockQuantity::agb, *s.mean * area / 1e6, area};
}

StockEstimate design_stock(std::span<const PlotRecord> plots, double region_area_ha, int year, Allometry allometry)
{
    if (plots.empty()) {
        throw InvalidArgument("design_stock: no plots");
    }
    if (!(region_area_ha > 0.0)) {
        throw InvalidArgument("design_stock: region area must be positive");
    }
    double sum = 0.0;
    for (const auto& p : plots) {
        sum += p.agb(allometry);
    }
    const double mean = sum / static_cast<double>(plots.size());
    return {year, StockMethod::design, allometry, StockQuantity::agb, mean * region_area_ha / 1e6, region_area_ha};
}

void CarbonFractionTable::validate() const
{
    if (entries.empty()) {
        throw InvalidArgument("carbon fraction table is empty");
    }
    double total = 0.0;
    for (const auto& e : entries) {
        if (!(e.fraction > 0.0 && e.fraction < 1.0)) {
            throw InvalidArgument("carbon fraction of '" + e.species_code + "' is outside (0,1)");
        }
        if (!(e.agb_share >= 0.0 && e.agb_share <= 1.0)) {
            throw InvalidArgument("AGB share of '" + e.species_code + "' is outside [0,1]");
        }
        total += e.agb_share;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw InvalidArgument("AGB shares sum to " + format_double(total) + ", not 1");
    }
}

double weighted_carbon_fraction(const CarbonFractionTable& table)
{
    table.validate();
    double f = 0.0;
    for (const auto& e : table.entries) {
        f += e.agb_share * e.fraction;
    }
    return f;
}

std::map<int, CarbonFractionTable> load_carbon_fractions(const std::filesystem::path& path)
{
    const auto t = CsvTable::read(path);
    const auto c_species = t.column("species_code");
    const auto c_fraction = t.column("fraction");
    const auto c_share = t.column("agb_share");
    const auto c_year = t.column("year");
    std::map<int, CarbonFractionTable> out;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        out[static_cast<int>(t.integer(r, c_year))].entries.push_back(
            {t.cell(r, c_species), t.number(r, c_fraction), t.number(r, c_share)});
    }
    for (const auto& [year, table] : out) {
        try {
            table.validate();
        } catch (const InvalidArgument& e) {
            throw FormatError(path.string() + ": year " + std::to_string(year) + ": " + e.what());
        }
    }
    return out;
}

StockEstimate agb_to_agc(const StockEstimate& stock, double fraction)
{
    if (stock.quantity != StockQuantity::agb) {
        throw InvalidArgument("agb_to_agc: estimate is already AGC");
    }
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw InvalidArgument("agb_to_agc: carbon fraction must lie in (0,1)");
    }
    auto out = stock;
    out.quantity = StockQuantity::agc;
    out.total_mt = fraction * stock.total_mt;
    return out;
}

double stock_change(const StockEstimate& later, const StockEstimate& earlier)
{
    if (later.method != earlier.method || later.allometry != earlier.allometry || later.quantity != earlier.quantity) {
        throw InvalidArgument("stock_change: estimates differ in method, allometry or quantity");
    }
    return later.total_mt - earlier.total_mt;
}

RescaleFit rescale_fit(const Grid& nsvb, const Grid& crm, const Grid& elevation, std::size_t n_sample,
                       double train_frac, std::uint64_t seed)
{
    require_aligned(nsvb, crm, "rescale_fit");
    require_aligned(nsvb, elevation, "rescale_fit");
    if (!(train_frac > 0.0 && train_frac <= 1.0)) {
        throw InvalidArgument("rescale_fit: train_frac must lie in (0,1]");
    }
    std::vector<std::size_t> cells;
    for (std::size_t i = 0; i < nsvb.size(); ++i) {
        if (nsvb.valid(i) && crm.valid(i) && elevation.valid(i)) {
            cells.push_back(i);
        }
    }
    const std::size_t n = std::min(n_sample, cells.size());
    if (n < 4) {
        throw InvalidArgument("rescale_fit: fewer than four jointly valid cells");
    }
    // Partial Fisher-Yates: the first n entries are a uniform sample in random order.
    auto rng = make_engine(seed, {0x5ca1e});
    for (std::size_t k = 0; k < n; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, cells.size() - 1);
        std::swap(cells[k], cells[pick(rng)]);
    }
    const auto n_train = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n))),
                                                 3, n);

    std::vector<std::vector<double>> cols(2, std::vector<double>(n_train));
    std::vector<double> y(n_train);
    for (std::size_t k = 0; k < n_train; ++k) {
        const auto i = cells[k];
        cols[0][k] = crm.value(i);
        cols[1][k] = elevation.value(i);
        y[k] = nsvb.value(i);
    }
    const auto ols = fit_ols(cols, y);
    if (ols.rank_deficient) {
        throw InvalidArgument("rescale_fit: CRM and elevation are constant or collinear over the sample");
    }
    RescaleFit fit;
    fit.beta0 = ols.intercept;
    fit.beta1 = ols.coefficients[0];
    fit.beta2 = ols.coefficients[1];
    fit.n_train = n_train;
    fit.n_test = n - n_train;
    if (fit.n_test > 0) {
        double se = 0.0, ae = 0.0, e_sum = 0.0, y_sum = 0.0;
        for (std::size_t k = n_train; k < n; ++k) {
            y_sum += nsvb.value(cells[k]);
        }
        const double ybar = y_sum / static_cast<double>(fit.n_test);
        double sst = 0.0;
        for (std::size_t k = n_train; k < n; ++k) {
            const auto i = cells[k];
            const double obs = nsvb.value(i);
            const double e = obs - fit.predict(crm.value(i), elevation.value(i));
            se += e * e;
            ae += std::abs(e);
            e_sum += e;
            sst += (obs - ybar) * (obs - ybar);
        }
        const double m = static_cast<double>(fit.n_test);
        fit.test_rmse = std::sqrt(se / m);
        fit.test_mae = ae / m;
        fit.test_me = e_sum / m;
        if (sst > 0.0) {
            fit.test_r2 = 1.0 - se / sst;
        }
    }
    return fit;
}

Grid rescale_apply(const RescaleFit& fit, const Grid& crm, const Grid& elevation)
{
    require_aligned(crm, elevation, "rescale_apply");
    Grid out(crm.geometry(), crm.units());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (crm.valid(i) && elevation.valid(i)) {
            out.set(i, static_cast<float>(fit.predict(crm.value(i), elevation.value(i))));
        }
    }
    return out;
}

} // namespace agbmap
