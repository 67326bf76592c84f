#include "agbmap/synth.hpp"

#include "agbmap/csv.hpp"
#include "agbmap/error.hpp"
#include "agbmap/footprint.hpp"
#include "agbmap/grid.hpp"
#include "agbmap/grid_io.hpp"
#include "agbmap/inventory.hpp"
#include "agbmap/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <string>

namespace agbmap {
namespace {

namespace fs = std::filesystem;

constexpr std::array<const char*, 6> kFeatures{"ndvi", "nbr", "tcw", "canopy_height", "elevation", "noise"};

struct Species {
    const char* code;
    double fraction;
};
constexpr std::array<Species, 8> kSpecies{{{"12", 0.497},
                                           {"129", 0.498},
                                           {"261", 0.496},
                                           {"316", 0.474},
                                           {"318", 0.480},
                                           {"375", 0.476},
                                           {"531", 0.478},
                                           {"833", 0.486}}};

/// Sum of Gaussian bumps scaled into [0, 1].
std::vector<double> smooth_field(const GridGeometry& g, int n_bumps, double min_width, double max_width, Engine& rng)
{
    std::uniform_real_distribution<double> ux(g.x_origin, g.x_max());
    std::uniform_real_distribution<double> uy(g.y_origin, g.y_max());
    std::uniform_real_distribution<double> uw(min_width, max_width);
    std::uniform_real_distribution<double> ua(0.3, 1.0);
    struct Bump {
        double x, y, w, a;
    };
    std::vector<Bump> bumps;
    for (int k = 0; k < n_bumps; ++k) {
        bumps.push_back({ux(rng), uy(rng), uw(rng), ua(rng)});
    }
    std::vector<double> f(g.cell_count(), 0.0);
    for (int r = 0; r < g.nrows; ++r) {
        for (int c = 0; c < g.ncols; ++c) {
            const auto p = g.cell_center(c, r);
            double v = 0.0;
            for (const auto& b : bumps) {
                const double d2 = (p.x - b.x) * (p.x - b.x) + (p.y - b.y) * (p.y - b.y);
                v += b.a * std::exp(-d2 / (2.0 * b.w * b.w));
            }
            f[static_cast<std::size_t>(r) * static_cast<std::size_t>(g.ncols) + static_cast<std::size_t>(c)] = v;
        }
    }
    const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
    const double a = *lo;
    const double span = *hi - *lo > 0.0 ? *hi - *lo : 1.0;
    for (auto& v : f) {
        v = (v - a) / span;
    }
    return f;
}

Grid to_grid(const GridGeometry& g, const std::vector<double>& v, const std::string& units)
{
    Grid out(g, units);
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.set(i, static_cast<float>(v[i]));
    }
    return out;
}

bool is_forest(int lc) { return lc == 4 || lc == 6; }

} // namespace

void write_synthetic_dataset(const fs::path& dir, const SynthOptions& o)
{
    if (o.ncols < 2 || o.nrows < 2 || !(o.cellsize > 0.0) || o.n_plots < 1 || o.years.empty()) {
        throw InvalidArgument("synth: need a grid of at least 2x2 cells, positive cellsize, plots and years");
    }
    if (!std::is_sorted(o.years.begin(), o.years.end())
        || std::adjacent_find(o.years.begin(), o.years.end()) != o.years.end()) {
        throw InvalidArgument("synth: years must be strictly increasing");
    }
    const GridGeometry g{o.ncols, o.nrows, 500000.0, 4500000.0, o.cellsize};
    const auto n = g.cell_count();
    const double extent = std::max(g.x_max() - g.x_origin, g.y_max() - g.y_origin);
    const SynthNsvbRelation rel;

    fs::create_directories(dir / "grids");
    fs::create_directories(dir / "truth");

    // Landscape: forest potential, elevation, a class field and disturbance patches.
    auto rng_field = make_engine(o.seed, {1});
    const auto potential = smooth_field(g, 40, 0.04 * extent, 0.15 * extent, rng_field);
    const auto relief = smooth_field(g, 12, 0.08 * extent, 0.25 * extent, rng_field);
    const auto classes = smooth_field(g, 60, 0.02 * extent, 0.06 * extent, rng_field);
    const auto disturb = smooth_field(g, 25, 0.01 * extent, 0.03 * extent, rng_field);

    std::vector<double> elevation(n);
    for (std::size_t i = 0; i < n; ++i) {
        elevation[i] = 80.0 + 1400.0 * (0.7 * relief[i] + 0.3 * potential[i]);
    }
    write_grid(to_grid(g, elevation, "m"), dir / "grids" / "elevation.bin");

    auto rng_cells = make_engine(o.seed, {2});
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    std::vector<int> lc_base(n);
    std::vector<double> b_base(n, 0.0);
    std::vector<double> growth(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (potential[i] > 0.3) {
            lc_base[i] = u01(rng_cells) < 0.08 ? 6 : 4;
            double b = 40.0 + 220.0 * (potential[i] - 0.3) / 0.7 + 10.0 * z(rng_cells);
            if (lc_base[i] == 6) {
                b *= 0.5;
            }
            b_base[i] = std::max(5.0, b);
            growth[i] = o.growth * std::max(0.0, 1.0 + 0.3 * z(rng_cells));
        } else {
            const double q = classes[i];
            lc_base[i] = q < 0.25 ? 2 : q < 0.45 ? 3 : q < 0.6 ? 1 : q < 0.75 ? 5 : q < 0.85 ? 8 : 3;
        }
    }

    const int first_year = o.years.front();
    const int last_year = o.years.back();
    std::map<int, std::vector<double>> crm_truth;
    std::map<int, std::vector<int>> landcover;
    for (int year : o.years) {
        const double t = last_year == first_year ? 0.0 : double(year - first_year) / double(last_year - first_year);
        auto& b = crm_truth[year];
        auto& lc = landcover[year];
        b.resize(n);
        lc = lc_base;
        for (std::size_t i = 0; i < n; ++i) {
            if (!is_forest(lc[i])) {
                b[i] = 0.0;
                continue;
            }
            b[i] = b_base[i] + t * growth[i];
            if (t > 0.0 && disturb[i] > 0.75) {
                b[i] = std::max(5.0, b_base[i] * (1.0 - 0.7 * t));
            }
        }
    }

    auto rng_maps = make_engine(o.seed, {3});
    for (int year : o.years) {
        const auto& b = crm_truth[year];
        std::vector<double> nsvb(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double e = o.nsvb_noise_sd > 0.0 ? o.nsvb_noise_sd * z(rng_maps) : 0.0;
            nsvb[i] = b[i] > 0.0 ? std::max(0.0, rel.beta0 + rel.beta1 * b[i] + rel.beta2 * elevation[i] + e) : 0.0;
        }
        const auto ys = std::to_string(year);
        write_grid(to_grid(g, b, "Mg/ha"), dir / "truth" / ("crm_" + ys + ".bin"));
        write_grid(to_grid(g, nsvb, "Mg/ha"), dir / "truth" / ("nsvb_" + ys + ".bin"));

        Grid lc(g, "class");
        for (std::size_t i = 0; i < n; ++i) {
            lc.set(i, static_cast<float>(landcover[year][i]));
        }
        write_grid(lc, dir / "grids" / ("landcover_" + ys + ".asc"));

        // Predictors respond to biomass with saturation and per-cell noise.
        auto rng_pred = make_engine(o.seed, {4, static_cast<std::uint64_t>(year)});
        std::array<std::vector<double>, kFeatures.size()> layers;
        for (auto& l : layers) {
            l.resize(n);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double bi = b[i];
            layers[0][i] = 0.2 + 0.6 * (1.0 - std::exp(-bi / 60.0)) + 0.03 * z(rng_pred);
            layers[1][i] = -0.1 + 0.8 * (1.0 - std::exp(-bi / 120.0)) + 0.04 * z(rng_pred);
            layers[2][i] = -0.15 + bi / 900.0 + 0.02 * z(rng_pred);
            layers[3][i] = std::max(0.0, 25.0 * (1.0 - std::exp(-bi / 150.0)) + 1.5 * z(rng_pred));
            layers[4][i] = elevation[i];
            layers[5][i] = z(rng_pred);
        }
        for (std::size_t k = 0; k < kFeatures.size(); ++k) {
            write_grid(to_grid(g, layers[k], k == 4 ? "m" : "index"),
                       dir / "grids" / (std::string(kFeatures[k]) + "_" + ys + ".bin"));
        }
    }

    // Plots and trees.
    auto rng_plots = make_engine(o.seed, {5});
    std::uniform_real_distribution<double> px(g.x_origin + 100.0, g.x_max() - 100.0);
    std::uniform_real_distribution<double> py(g.y_origin + 100.0, g.y_max() - 100.0);
    std::uniform_int_distribution<int> panel_draw(1, 5);
    std::uniform_int_distribution<std::size_t> year_draw(0, o.years.size() - 1);
    std::uniform_int_distribution<int> subplot_draw(1, 4);
    std::uniform_int_distribution<std::size_t> species_draw(0, kSpecies.size() - 1);
    std::exponential_distribution<double> expo(1.0);
    std::uniform_int_distribution<int> tree_count(3, 12);

    std::map<int, Grid> crm_grids;
    for (int year : o.years) {
        crm_grids.emplace(year, to_grid(g, crm_truth[year], "Mg/ha"));
    }

    std::ofstream plots_out(dir / "plots.csv");
    std::ofstream trees_out(dir / "trees.csv");
    plots_out << "plot_id,x_m,y_m,inventory_year,panel,forested_fraction,max_canopy_height_m\n";
    trees_out << "plot_id,subplot,species_code,dbh_cm,agb_crm_kg,agb_nsvb_kg,inventory_year\n";
    CsvWriter pw(plots_out);
    CsvWriter tw(trees_out);
    const double area_ha = plot_area_ha();

    for (int p = 0; p < o.n_plots; ++p) {
        const std::string id = "P" + std::to_string(100000 + p);
        const Point loc{std::round(px(rng_plots) * 10.0) / 10.0, std::round(py(rng_plots) * 10.0) / 10.0};
        const int panel = panel_draw(rng_plots);
        std::vector<int> years;
        if (u01(rng_plots) < o.remeasure_fraction) {
            years = o.years;
        } else {
            years.push_back(o.years[year_draw(rng_plots)]);
        }
        const int col = std::clamp(static_cast<int>((loc.x - g.x_origin) / g.cellsize), 0, g.ncols - 1);
        const int row = std::clamp(static_cast<int>((g.y_max() - loc.y) / g.cellsize), 0, g.nrows - 1);
        const auto cell = static_cast<std::size_t>(row) * static_cast<std::size_t>(g.ncols) + static_cast<std::size_t>(col);
        const PlotFootprint fp(loc);

        for (int year : years) {
            const int lc = landcover[year][cell];
            double ff = 0.0;
            std::optional<double> height;
            double crm = 0.0;
            if (is_forest(lc)) {
                const double truth = extract_weighted_mean(crm_grids.at(year), fp).value_or(0.0);
                ff = u01(rng_plots) < 0.9 ? 1.0 : 0.5;
                crm = std::max(0.0, ff * truth + o.plot_noise_sd * z(rng_plots));
                height = 18.0 + 8.0 * u01(rng_plots);
            } else {
                const double h = u01(rng_plots);
                if (h < 0.85) {
                    height = 0.4;
                } else if (h < 0.95) {
                    height = 2.5;
                }
            }
            pw.field(id).field(loc.x).field(loc.y).field(year).field(panel).field(ff).field(height);
            pw.end_row();

            if (crm > 0.0) {
                const double nsvb_density =
                    std::max(0.0, rel.beta0 + rel.beta1 * crm + rel.beta2 * elevation[cell] + 5.0 * z(rng_plots));
                const double ratio = nsvb_density / crm;
                const double total_kg = crm * area_ha * 1000.0;
                const int k = tree_count(rng_plots);
                std::vector<double> w(static_cast<std::size_t>(k));
                double ws = 0.0;
                for (auto& x : w) {
                    x = expo(rng_plots);
                    ws += x;
                }
                for (int t = 0; t < k; ++t) {
                    const double kg = total_kg * w[static_cast<std::size_t>(t)] / ws;
                    const double dbh = std::round((12.7 + std::min(60.0, 15.0 * expo(rng_plots))) * 10.0) / 10.0;
                    tw.field(id)
                        .field(subplot_draw(rng_plots))
                        .field(kSpecies[species_draw(rng_plots)].code)
                        .field(dbh)
                        .field(kg)
                        .field(kg * ratio)
                        .field(year);
                    tw.end_row();
                }
            }
            if (u01(rng_plots) < 0.1) {
                // Sapling below the DBH threshold; ingest drops it.
                tw.field(id).field(subplot_draw(rng_plots)).field(kSpecies[0].code).field(9.5).field(4.0).field(4.5).field(year);
                tw.end_row();
            }
        }
    }

    // Species-weighted carbon fractions per year.
    auto rng_cf = make_engine(o.seed, {6});
    std::ofstream cf(dir / "carbon_fractions.csv");
    cf << "species_code,fraction,agb_share,year\n";
    CsvWriter cw(cf);
    for (int year : o.years) {
        std::vector<double> share(kSpecies.size());
        double s = 0.0;
        for (auto& x : share) {
            x = 0.2 + expo(rng_cf);
            s += x;
        }
        double used = 0.0;
        for (std::size_t k = 0; k < kSpecies.size(); ++k) {
            double v = std::round(share[k] / s * 1e6) / 1e6;
            if (k + 1 == kSpecies.size()) {
                v = std::round((1.0 - used) * 1e6) / 1e6;
            }
            used += v;
            cw.field(kSpecies[k].code).field(kSpecies[k].fraction).field(v).field(year);
            cw.end_row();
        }
    }

    nlohmann::json predictors = nlohmann::json::object();
    nlohmann::json lc_paths = nlohmann::json::object();
    for (int year : o.years) {
        const auto ys = std::to_string(year);
        nlohmann::json layer = nlohmann::json::object();
        for (const auto* f : kFeatures) {
            layer[f] = "grids/" + std::string(f) + "_" + ys + ".bin";
        }
        predictors[ys] = layer;
        lc_paths[ys] = "grids/landcover_" + ys + ".asc";
    }
    nlohmann::json config = {
        {"seed", o.seed},
        {"paths",
         {{"trees", "trees.csv"},
          {"plots", "plots.csv"},
          {"carbon_fractions", "carbon_fractions.csv"},
          {"elevation", "grids/elevation.bin"},
          {"landcover", lc_paths},
          {"predictors", predictors}}},
        {"features", std::vector<std::string>(kFeatures.begin(), kFeatures.end())},
        {"allometries", {"crm", "nsvb"}},
        {"holdout_panel", "random"},
        {"map_years", o.years},
        {"removed_classes", {1, 2, 5, 8}},
        {"output_dir", "out"},
    };
    std::ofstream(dir / "config.json") << config.dump(2) << '\n';
}

} // namespace agbmap
