#include "agbmap/error.hpp"
#include "agbmap/inventory.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

using namespace agbmap;

namespace {

const char* kTreeHeader = "plot_id,subplot,species_code,dbh_cm,agb_crm_kg,agb_nsvb_kg,inventory_year\n";
const char* kPlotHeader = "plot_id,x_m,y_m,inventory_year,panel,forested_fraction,max_canopy_height_m\n";

Loaded<TreeRecord> trees_from(const std::string& body)
{
    std::istringstream in(std::string(kTreeHeader) + body);
    return load_trees(in);
}

TreeRecord tree(const std::string& plot, double crm_kg, double nsvb_kg, int year = 2019, int subplot = 1)
{
    TreeRecord t;
    t.plot_id = plot;
    t.subplot = subplot;
    t.species_code = "316";
    t.dbh_cm = 20.0;
    t.agb_crm_kg = crm_kg;
    t.agb_nsvb_kg = nsvb_kg;
    t.inventory_year = year;
    return t;
}

PlotRecord plot(const std::string& id, int year, int panel, double ff = 1.0, std::optional<double> h = {})
{
    PlotRecord p;
    p.plot_id = id;
    p.inventory_year = year;
    p.panel = panel;
    p.forested_fraction = ff;
    p.max_canopy_height_m = h;
    p.agb_crm = 80.0;
    p.agb_nsvb = 90.0;
    return p;
}

} // namespace

TEST(Inventory, PlotAreaOracle)
{
    const double circle = std::numbers::pi * 7.32 * 7.32;
    EXPECT_NEAR(plot_area_m2(), 4 * circle, 1e-9);
    EXPECT_DOUBLE_EQ(plot_area_m2(), 4.0 * std::numbers::pi * 7.32 * 7.32);
    EXPECT_DOUBLE_EQ(plot_area_ha(), plot_area_m2() / 10000.0);
    // The usual quoted figure, 673.36, carries a rounded pi.
    EXPECT_NEAR(plot_area_m2(), 673.36, 1e-3 * 673.36);
    // Subplot circles are disjoint: 36.6 m spacing against a 14.64 m diameter.
    EXPECT_GT(kSubplotOffsetM, 2 * kSubplotRadiusM);
}

TEST(Inventory, LoadTreesExamples)
{
    EXPECT_TRUE(trees_from("").records.empty());

    const auto one = trees_from("P1,1,316,25.0,90,100,2019\n");
    ASSERT_EQ(one.records.size(), 1u);
    EXPECT_EQ(one.records[0].agb_nsvb_kg, 100.0);
    EXPECT_EQ(one.records[0].species_code, "316");
    EXPECT_TRUE(one.warnings.empty());

    const auto small = trees_from("P1,1,316,10.0,9,10,2019\nP1,2,316,12.7,9,10,2019\n");
    ASSERT_EQ(small.records.size(), 1u);
    EXPECT_EQ(small.records[0].dbh_cm, 12.7);
    ASSERT_EQ(small.warnings.size(), 1u);
    EXPECT_NE(small.warnings[0].find("12.7"), std::string::npos);
}

TEST(Inventory, LoadTreesErrors)
{
    EXPECT_THROW(trees_from("P1,1,316,25.0,-1,100,2019\n"), FormatError);
    EXPECT_THROW(trees_from("P1,5,316,25.0,1,100,2019\n"), FormatError);
    EXPECT_THROW(trees_from("P1,1,316,abc,1,100,2019\n"), FormatError);
    std::istringstream missing("plot_id,subplot,dbh_cm,agb_crm_kg,agb_nsvb_kg,inventory_year\n");
    EXPECT_THROW(load_trees(missing), FormatError);
    EXPECT_THROW(load_trees(std::filesystem::path("/nonexistent/trees.csv")), Error);
}

TEST(Inventory, LoadPlots)
{
    std::istringstream in(std::string(kPlotHeader) + "A,10.5,20.5,2005,3,1,\nB,1,2,2019,5,0,0.4\n");
    const auto loaded = load_plots(in);
    ASSERT_EQ(loaded.records.size(), 2u);
    EXPECT_EQ(loaded.records[0].location, (Point{10.5, 20.5}));
    EXPECT_FALSE(loaded.records[0].max_canopy_height_m);
    EXPECT_EQ(*loaded.records[1].max_canopy_height_m, 0.4);
    EXPECT_EQ(loaded.records[1].panel, 5);

    std::istringstream bad_panel(std::string(kPlotHeader) + "A,1,2,2005,6,1,\n");
    EXPECT_THROW(load_plots(bad_panel), FormatError);
    std::istringstream bad_ff(std::string(kPlotHeader) + "A,1,2,2005,1,1.5,\n");
    EXPECT_THROW(load_plots(bad_ff), FormatError);
}

TEST(Inventory, AggregateExamples)
{
    const std::vector<TreeRecord> trees{tree("A", 600.0, 673.36), tree("B", 67.336, 67.336)};
    const auto nsvb = aggregate_plot_agb(trees, Allometry::nsvb);
    // Oracle: kg / (4 * pi * 7.32^2 m^2 / 10^4) / 1000.
    const double ha = 4 * std::numbers::pi * 7.32 * 7.32 / 1e4;
    EXPECT_NEAR(nsvb.at({"A", 2019}), 673.36 / ha / 1000.0, 1e-12);
    EXPECT_NEAR(nsvb.at({"A", 2019}), 10.0, 1e-3);
    EXPECT_NEAR(nsvb.at({"B", 2019}), 1.0, 1e-4);
    EXPECT_NEAR(aggregate_plot_agb(trees, Allometry::crm).at({"A", 2019}), 600.0 / ha / 1000.0, 1e-12);

    std::vector<PlotRecord> plots{plot("A", 2019, 1), plot("Z", 2019, 1), plot("A", 2005, 1)};
    attach_plot_agb(plots, trees);
    EXPECT_NEAR(plots[0].agb_nsvb, 10.0, 1e-3);
    EXPECT_EQ(plots[1].agb_crm, 0.0);
    EXPECT_EQ(plots[1].agb_nsvb, 0.0);
    EXPECT_EQ(plots[2].agb_nsvb, 0.0); // same plot, other year
}

TEST(Inventory, AggregateIsAdditive)
{
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> kg(0.0, 900.0);
    std::vector<TreeRecord> a, b;
    for (int i = 0; i < 40; ++i) {
        (i % 3 == 0 ? a : b).push_back(tree("P", kg(rng), kg(rng), 2010, 1 + i % 4));
    }
    auto all = a;
    all.insert(all.end(), b.begin(), b.end());
    for (auto al : {Allometry::crm, Allometry::nsvb}) {
        const PlotKey k{"P", 2010};
        EXPECT_NEAR(aggregate_plot_agb(all, al).at(k), aggregate_plot_agb(a, al).at(k) + aggregate_plot_agb(b, al).at(k),
                    1e-9);
    }
}

TEST(Inventory, AllometryParsing)
{
    EXPECT_EQ(parse_allometry("crm"), Allometry::crm);
    EXPECT_EQ(parse_allometry("NSVB"), Allometry::nsvb);
    EXPECT_THROW(parse_allometry("jenkins"), InvalidArgument);
    EXPECT_EQ(to_string(Allometry::nsvb), "nsvb");
}

TEST(Inventory, SelectSingleInventoryExamples)
{
    const std::vector<PlotRecord> once{plot("A", 2010, 1)};
    const auto kept = select_single_inventory(once, 5);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].inventory_year, 2010);

    const std::vector<PlotRecord> multi{plot("A", 2005, 1), plot("B", 2006, 2), plot("A", 2010, 1),
                                        plot("A", 2015, 1), plot("B", 2016, 2)};
    const auto s1 = select_single_inventory(multi, 9);
    ASSERT_EQ(s1.size(), 2u);
    EXPECT_EQ(s1[0].plot_id, "A");
    EXPECT_EQ(s1[1].plot_id, "B");
    const auto s2 = select_single_inventory(multi, 9);
    EXPECT_EQ(s1[0].inventory_year, s2[0].inventory_year);
    EXPECT_EQ(s1[1].inventory_year, s2[1].inventory_year);
}

TEST(Inventory, SelectSingleInventoryFrequency)
{
    const std::vector<PlotRecord> multi{plot("A", 2005, 1), plot("A", 2010, 1), plot("A", 2015, 1)};
    std::map<int, int> counts;
    const int trials = 10000;
    for (int s = 0; s < trials; ++s) {
        counts[select_single_inventory(multi, static_cast<std::uint64_t>(s)).at(0).inventory_year]++;
    }
    ASSERT_EQ(counts.size(), 3u);
    for (const auto& [year, c] : counts) {
        EXPECT_NEAR(double(c) / trials, 1.0 / 3.0, 0.05) << year;
    }
}

TEST(Inventory, SplitByPanelExamples)
{
    std::vector<PlotRecord> five;
    for (int p = 1; p <= 5; ++p) {
        five.push_back(plot("P" + std::to_string(p), 2010, p));
    }
    const auto part = split_by_panel(five, 3, 1);
    ASSERT_EQ(part.map_assessment.size(), 1u);
    EXPECT_EQ(part.map_assessment[0].panel, 3);
    EXPECT_EQ(part.model_development.size(), 4u);
    EXPECT_EQ(part.holdout_panel, 3);

    const auto r1 = split_by_panel(five, std::nullopt, 77);
    const auto r2 = split_by_panel(five, std::nullopt, 77);
    EXPECT_EQ(r1.holdout_panel, r2.holdout_panel);
    EXPECT_GE(r1.holdout_panel, 1);
    EXPECT_LE(r1.holdout_panel, 5);

    std::set<int> seen;
    for (std::uint64_t s = 0; s < 200; ++s) {
        seen.insert(split_by_panel(five, std::nullopt, s).holdout_panel);
    }
    EXPECT_EQ(seen.size(), 5u);

    EXPECT_THROW(split_by_panel({plot("A", 2010, 1)}, 2, 1), InvalidArgument);
    EXPECT_THROW(split_by_panel(five, 0, 1), InvalidArgument);
}

TEST(Inventory, SplitByPanelCountAndPartition)
{
    std::mt19937_64 rng(43);
    std::uniform_int_distribution<int> panel(1, 5);
    std::vector<PlotRecord> plots;
    for (int i = 0; i < 5144; ++i) {
        plots.push_back(plot("P" + std::to_string(i), 2010, panel(rng)));
    }
    const auto part = split_by_panel(plots, 2, 1);
    // Binomial(5144, 0.2): mean 1028.8, sd 28.7; four sd either side.
    EXPECT_NEAR(double(part.map_assessment.size()), 1028.8, 4 * 28.7);
    EXPECT_EQ(part.map_assessment.size() + part.model_development.size(), plots.size());
    std::set<std::string> ids;
    for (const auto& p : part.map_assessment) {
        EXPECT_EQ(p.panel, 2);
        ids.insert(p.plot_id);
    }
    for (const auto& p : part.model_development) {
        EXPECT_NE(p.panel, 2);
        EXPECT_FALSE(ids.contains(p.plot_id));
        ids.insert(p.plot_id);
    }
    EXPECT_EQ(ids.size(), plots.size());
}

TEST(Inventory, FilterModelDevExamples)
{
    const auto out = filter_model_dev({plot("F", 2010, 1, 1.0), plot("N", 2010, 1, 0.0, 0.5), plot("H", 2010, 1, 0.5),
                                       plot("T", 2010, 1, 0.0, 3.0), plot("M", 2010, 1, 0.0),
                                       plot("E", 2010, 1, 0.0, 1.0)});
    std::map<std::string, PlotRecord> by_id;
    for (const auto& p : out.records) {
        by_id[p.plot_id] = p;
    }
    ASSERT_EQ(by_id.size(), 3u);
    EXPECT_EQ(by_id.at("F").agb_crm, 80.0);
    EXPECT_EQ(by_id.at("N").agb_crm, 0.0);
    EXPECT_EQ(by_id.at("N").agb_nsvb, 0.0);
    EXPECT_EQ(by_id.at("E").agb_nsvb, 0.0);
    ASSERT_EQ(out.warnings.size(), 1u);
    EXPECT_NE(out.warnings[0].find("M"), std::string::npos);
}
