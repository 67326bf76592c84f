#pragma once

#include "agbmap/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace agbmap {

enum class Allometry { crm, nsvb };

std::string_view to_string(Allometry a);
/// Accepts "crm"/"CRM" and "nsvb"/"NSVB"; throws InvalidArgument otherwise.
Allometry parse_allometry(std::string_view text);

/// Minimum DBH (cm) of a measured tree.
inline constexpr double kMinDbhCm = 12.7;
/// FIA subplot radius (m) and distance of subplots 2-4 from the plot center (m).
inline constexpr double kSubplotRadiusM = 7.32;
inline constexpr double kSubplotOffsetM = 36.6;
/// Area of the four disjoint subplot circles, in square meters and hectares.
double plot_area_m2();
double plot_area_ha();

struct TreeRecord {
    std::string plot_id;
    int subplot = 1;
    std::string species_code;
    double dbh_cm = 0.0;
    double agb_crm_kg = 0.0;
    double agb_nsvb_kg = 0.0;
    int inventory_year = 0;

    double agb_kg(Allometry a) const { return a == Allometry::crm ? agb_crm_kg : agb_nsvb_kg; }
};

struct PlotRecord {
    std::string plot_id;
    Point location;
    int inventory_year = 0;
    int panel = 1;
    double forested_fraction = 1.0;
    std::optional<double> max_canopy_height_m;
    double agb_crm = 0.0;  // Mg/ha
    double agb_nsvb = 0.0; // Mg/ha

    double agb(Allometry a) const { return a == Allometry::crm ? agb_crm : agb_nsvb; }
    void set_agb(Allometry a, double v) { (a == Allometry::crm ? agb_crm : agb_nsvb) = v; }
};

/// A plot measurement is identified by plot and inventory year.
struct PlotKey {
    std::string plot_id;
    int inventory_year = 0;

    auto operator<=>(const PlotKey&) const = default;
};

template <class T>
struct Loaded {
    std::vector<T> records;
    std::vector<std::string> warnings;
};

/// trees.csv: plot_id, subplot, species_code, dbh_cm, agb_crm_kg, agb_nsvb_kg,
/// inventory_year. Trees under 12.7 cm DBH are dropped with a warning;
/// negative biomass or a subplot outside 1..4 is an error.
Loaded<TreeRecord> load_trees(const std::filesystem::path& path);
Loaded<TreeRecord> load_trees(std::istream& in);

/// plots.csv: plot_id, x_m, y_m, inventory_year, panel, forested_fraction,
/// max_canopy_height_m (blank allowed). Densities are left at zero.
Loaded<PlotRecord> load_plots(const std::filesystem::path& path);
Loaded<PlotRecord> load_plots(std::istream& in);

/// Sum of tree biomass per plot measurement divided by the full four-subplot area,
/// in Mg/ha.
std::map<PlotKey, double> aggregate_plot_agb(const std::vector<TreeRecord>& trees, Allometry allometry);

/// Fills both allometries' densities on each plot from its trees; plots without
/// trees get 0.
void attach_plot_agb(std::vector<PlotRecord>& plots, const std::vector<TreeRecord>& trees);

/// Keeps one uniformly chosen measurement per plot_id. Output follows the order
/// in which plot ids first appear.
std::vector<PlotRecord> select_single_inventory(const std::vector<PlotRecord>& plots, std::uint64_t seed);

struct PlotPartition {
    std::vector<PlotRecord> model_development;
    std::vector<PlotRecord> map_assessment;
    int holdout_panel = 1;
    std::uint64_t seed = 0;
};

/// Assigns every plot of `holdout_panel` (or a seeded uniform draw from 1..5 when
/// empty) to the assessment set. Throws InvalidArgument if that panel has no plots.
PlotPartition split_by_panel(const std::vector<PlotRecord>& plots, std::optional<int> holdout_panel, std::uint64_t seed);

/// Keeps fully forested plots and fully nonforested plots whose canopy height is
/// at most 1 m (their biomass is set to 0 under both allometries).
Loaded<PlotRecord> filter_model_dev(const std::vector<PlotRecord>& dev);

} // namespace agbmap
