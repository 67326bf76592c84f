#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace agbmap {

/// Parameters of the bundled synthetic landscape.
struct SynthOptions {
    int ncols = 200;
    int nrows = 200;
    double cellsize = 1500.0;
    int n_plots = 300;
    std::uint64_t seed = 1;
    std::vector<int> years{2005, 2019};
    /// Share of plots measured in every year rather than one.
    double remeasure_fraction = 0.4;
    /// Sd (Mg/ha) of plot-level reference noise around the cell's CRM density.
    double plot_noise_sd = 25.0;
    /// Sd (Mg/ha) of the additive noise on the synthetic NSVB map relation.
    double nsvb_noise_sd = 0.0;
    /// Mean CRM gain (Mg/ha) between the first and last year on forested cells.
    double growth = 10.0;
};

/// Coefficients of the CRM -> NSVB relation the generator applies per cell.
struct SynthNsvbRelation {
    double beta0 = 9.555;
    double beta1 = 1.135;
    double beta2 = -0.023;
};

/// Writes trees.csv, plots.csv, carbon_fractions.csv, grids (elevation,
/// landcover and predictor layers per year) and config.json into `dir`. True
/// CRM/NSVB density maps go to `dir`/truth. Deterministic given options.
void write_synthetic_dataset(const std::filesystem::path& dir, const SynthOptions& options);

} // namespace agbmap
