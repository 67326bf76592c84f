#include "agbmap/inventory.hpp"

#include "agbmap/csv.hpp"
#include "agbmap/error.hpp"
#include "agbmap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <unordered_map>

namespace agbmap {

std::string_view to_string(Allometry a) { return a == Allometry::crm ? "crm" : "nsvb"; }

Allometry parse_allometry(std::string_view text)
{
    if (text == "crm" || text == "CRM") {
        return Allometry::crm;
    }
    if (text == "nsvb" || text == "NSVB") {
        return Allometry::nsvb;
    }
    throw InvalidArgument("unknown allometry '" + std::string(text) + "'");
}

double plot_area_m2() { return 4.0 * std::numbers::pi * kSubplotRadiusM * kSubplotRadiusM; }

double plot_area_ha() { return plot_area_m2() / 10000.0; }

namespace {

Loaded<TreeRecord> trees_from_table(const CsvTable& t)
{
    const auto c_plot = t.column("plot_id");
    const auto c_sub = t.column("subplot");
    const auto c_species = t.column("species_code");
    const auto c_dbh = t.column("dbh_cm");
    const auto c_crm = t.column("agb_crm_kg");
    const auto c_nsvb = t.column("agb_nsvb_kg");
    const auto c_year = t.column("inventory_year");

    Loaded<TreeRecord> out;
    out.records.reserve(t.rows());
    for (std::size_t r = 0; r < t.rows(); ++r) {
        TreeRecord tree;
        tree.plot_id = t.cell(r, c_plot);
        tree.subplot = static_cast<int>(t.integer(r, c_sub));
        tree.species_code = t.cell(r, c_species);
        tree.dbh_cm = t.number(r, c_dbh);
        tree.agb_crm_kg = t.number(r, c_crm);
        tree.agb_nsvb_kg = t.number(r, c_nsvb);
        tree.inventory_year = static_cast<int>(t.integer(r, c_year));

        const auto where = t.source() + " row " + std::to_string(r + 1);
        if (tree.plot_id.empty()) {
            throw FormatError(where + ": empty plot_id");
        }
        if (tree.subplot < 1 || tree.subplot > 4) {
            throw FormatError(where + ": subplot must be in 1..4");
        }
        if (tree.agb_crm_kg < 0.0 || tree.agb_nsvb_kg < 0.0) {
            throw FormatError(where + ": negative biomass");
        }
        if (tree.dbh_cm < kMinDbhCm) {
            out.warnings.push_back(where + ": dbh " + format_double(tree.dbh_cm) + " cm below 12.7 cm threshold; dropped");
            continue;
        }
        out.records.push_back(std::move(tree));
    }
    return out;
}

Loaded<PlotRecord> plots_from_table(const CsvTable& t)
{
    const auto c_plot = t.column("plot_id");
    const auto c_x = t.column("x_m");
    const auto c_y = t.column("y_m");
    const auto c_year = t.column("inventory_year");
    const auto c_panel = t.column("panel");
    const auto c_ff = t.column("forested_fraction");
    const auto c_h = t.column("max_canopy_height_m");

    Loaded<PlotRecord> out;
    out.records.reserve(t.rows());
    for (std::size_t r = 0; r < t.rows(); ++r) {
        PlotRecord p;
        p.plot_id = t.cell(r, c_plot);
        p.location = {t.number(r, c_x), t.number(r, c_y)};
        p.inventory_year = static_cast<int>(t.integer(r, c_year));
        p.panel = static_cast<int>(t.integer(r, c_panel));
        p.forested_fraction = t.number(r, c_ff);
        p.max_canopy_height_m = t.optional_number(r, c_h);

        const auto where = t.source() + " row " + std::to_string(r + 1);
        if (p.plot_id.empty()) {
            throw FormatError(where + ": empty plot_id");
        }
        if (p.panel < 1 || p.panel > 5) {
            throw FormatError(where + ": panel must be in 1..5");
        }
        if (p.forested_fraction < 0.0 || p.forested_fraction > 1.0) {
            throw FormatError(where + ": forested_fraction must be in [0, 1]");
        }
        out.records.push_back(std::move(p));
    }
    return out;
}

} // namespace

Loaded<TreeRecord> load_trees(const std::filesystem::path& path) { return trees_from_table(CsvTable::read(path)); }

Loaded<TreeRecord> load_trees(std::istream& in) { return trees_from_table(CsvTable::parse(in, "trees.csv")); }

Loaded<PlotRecord> load_plots(const std::filesystem::path& path) { return plots_from_table(CsvTable::read(path)); }

Loaded<PlotRecord> load_plots(std::istream& in) { return plots_from_table(CsvTable::parse(in, "plots.csv")); }

std::map<PlotKey, double> aggregate_plot_agb(const std::vector<TreeRecord>& trees, Allometry allometry)
{
    std::map<PlotKey, double> kg;
    for (const auto& t : trees) {
        kg[PlotKey{t.plot_id, t.inventory_year}] += t.agb_kg(allometry);
    }
    const double area = plot_area_ha();
    for (auto& [key, v] : kg) {
        v = v / area / 1000.0;
    }
    return kg;
}

void attach_plot_agb(std::vector<PlotRecord>& plots, const std::vector<TreeRecord>& trees)
{
    for (auto a : {Allometry::crm, Allometry::nsvb}) {
        const auto density = aggregate_plot_agb(trees, a);
        for (auto& p : plots) {
            const auto it = density.find(PlotKey{p.plot_id, p.inventory_year});
            p.set_agb(a, it == density.end() ? 0.0 : it->second);
        }
    }
}

std::vector<PlotRecord> select_single_inventory(const std::vector<PlotRecord>& plots, std::uint64_t seed)
{
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < plots.size(); ++i) {
        auto [it, inserted] = groups.try_emplace(plots[i].plot_id);
        if (inserted) {
            order.push_back(plots[i].plot_id);
        }
        it->second.push_back(i);
    }

    auto rng = make_engine(seed, {0x5e1ec7});
    std::vector<PlotRecord> out;
    out.reserve(order.size());
    for (const auto& id : order) {
        auto& members = groups[id];
        // Draw among measurements sorted by year so input row order cannot bias the choice.
        std::stable_sort(members.begin(), members.end(),
                         [&](std::size_t a, std::size_t b) { return plots[a].inventory_year < plots[b].inventory_year; });
        std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
        out.push_back(plots[members[pick(rng)]]);
    }
    return out;
}

PlotPartition split_by_panel(const std::vector<PlotRecord>& plots, std::optional<int> holdout_panel, std::uint64_t seed)
{
    PlotPartition part;
    part.seed = seed;
    if (holdout_panel) {
        if (*holdout_panel < 1 || *holdout_panel > 5) {
            throw InvalidArgument("holdout panel must be in 1..5");
        }
        part.holdout_panel = *holdout_panel;
    } else {
        auto rng = make_engine(seed, {0x9a4e1});
        part.holdout_panel = std::uniform_int_distribution<int>(1, 5)(rng);
    }
    for (const auto& p : plots) {
        (p.panel == part.holdout_panel ? part.map_assessment : part.model_development).push_back(p);
    }
    if (part.map_assessment.empty()) {
        throw InvalidArgument("holdout panel " + std::to_string(part.holdout_panel) + " has no plots");
    }
    return part;
}

Loaded<PlotRecord> filter_model_dev(const std::vector<PlotRecord>& dev)
{
    Loaded<PlotRecord> out;
    for (const auto& p : dev) {
        if (p.forested_fraction == 1.0) {
            out.records.push_back(p);
        } else if (p.forested_fraction == 0.0) {
            if (!p.max_canopy_height_m) {
                out.warnings.push_back("plot " + p.plot_id + " (" + std::to_string(p.inventory_year)
                                       + "): nonforested without canopy height; excluded");
                continue;
            }
            if (*p.max_canopy_height_m <= 1.0) {
                auto kept = p;
                kept.agb_crm = 0.0;
                kept.agb_nsvb = 0.0;
                out.records.push_back(std::move(kept));
            }
        }
    }
    return out;
}

} // namespace agbmap
