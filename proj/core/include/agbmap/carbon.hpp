#pragma once

#include "agbmap/grid.hpp"
#include "agbmap/inventory.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace agbmap {

enum class StockMethod { design, model };
enum class StockQuantity { agb, agc };

std::string_view to_string(StockMethod m);
std::string_view to_string(StockQuantity q);

struct StockEstimate {
    int year = 0;
    StockMethod method = StockMethod::model;
    Allometry allometry = Allometry::crm;
    StockQuantity quantity = StockQuantity::agb;
    double total_mt = 0.0; // million metric tons
    double region_area_ha = 0.0;
};

/// Area over which the mean model density is expanded.
enum class AreaBasis {
    full_extent, // every cell of the grid, masked or not
    valid_cells, // valid cells only
};

/// Mean valid-cell density (Mg/ha) times the region area, in Mt. Throws
/// InvalidArgument when no cell is valid.
StockEstimate model_stock(const Grid& agb, int year, Allometry allometry, AreaBasis basis = AreaBasis::full_extent);

/// Simple expansion: mean plot density times `region_area_ha`, in Mt.
StockEstimate design_stock(std::span<const PlotRecord> plots, double region_area_ha, int year, Allometry allometry);

/// Carbon fraction the CRM convention applies to every stock.
inline constexpr double kCrmCarbonFraction = 0.5;

struct CarbonFractionEntry {
    std::string species_code;
    double fraction = 0.0;  // carbon per unit biomass
    double agb_share = 0.0; // share of statewide AGB
};

struct CarbonFractionTable {
    std::vector<CarbonFractionEntry> entries;

    /// Throws InvalidArgument unless shares lie in [0,1] and sum to 1 (1e-9) and
    /// fractions lie in (0,1).
    void validate() const;
};

/// Sum of share * fraction.
double weighted_carbon_fraction(const CarbonFractionTable& table);

/// carbon_fractions.csv: species_code, fraction, agb_share, year. One table per year.
std::map<int, CarbonFractionTable> load_carbon_fractions(const std::filesystem::path& path);

/// Requires an AGB estimate and a fraction in (0,1).
StockEstimate agb_to_agc(const StockEstimate& stock, double fraction);

/// later - earlier in Mt. Throws InvalidArgument when method, allometry or
/// quantity differ.
double stock_change(const StockEstimate& later, const StockEstimate& earlier);

struct RescaleFit {
    double beta0 = 0.0; // Mg/ha
    double beta1 = 0.0; // NSVB per CRM
    double beta2 = 0.0; // Mg/ha per m of elevation
    std::optional<double> test_rmse;
    std::optional<double> test_mae;
    std::optional<double> test_me; // mean(observed - predicted)
    std::optional<double> test_r2;
    std::size_t n_train = 0;
    std::size_t n_test = 0;

    double predict(double crm, double elevation) const { return beta0 + beta1 * crm + beta2 * elevation; }
};

/// Samples up to `n_sample` jointly valid cells without replacement, fits
/// NSVB ~ 1 + CRM + elevation by OLS on the first `train_frac` of the sample and
/// scores the rest. Throws InvalidArgument on constant or collinear covariates.
RescaleFit rescale_fit(const Grid& nsvb, const Grid& crm, const Grid& elevation, std::size_t n_sample = 1000000,
                       double train_frac = 0.8, std::uint64_t seed = 0);

/// Applies a fitted rescale model cell-wise; masked where any input is masked.
Grid rescale_apply(const RescaleFit& fit, const Grid& crm, const Grid& elevation);

} // namespace agbmap
