#include "agbmap/carbon.hpp"
#include "agbmap/error.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

using namespace agbmap;

namespace {

PlotRecord plot_with(double agb)
{
    PlotRecord p;
    p.plot_id = "P";
    p.agb_crm = agb;
    p.agb_nsvb = agb * 1.1;
    return p;
}

StockEstimate estimate(double mt, int year, Allometry a = Allometry::crm, StockMethod m = StockMethod::model)
{
    StockEstimate s;
    s.year = year;
    s.allometry = a;
    s.method = m;
    s.total_mt = mt;
    return s;
}

struct RescaleGrids {
    Grid nsvb, crm, elev;
};

RescaleGrids rescale_grids(std::uint64_t seed, double sigma, double b0 = 9.555, double b1 = 1.135, double b2 = -0.023)
{
    std::mt19937_64 rng(seed);
    const auto g = testutil::geom(300, 300, 30.0);
    std::uniform_real_distribution<double> crm(0.0, 250.0), elev(0.0, 1500.0);
    std::normal_distribution<double> e(0.0, sigma > 0 ? sigma : 1.0);
    RescaleGrids out{Grid(g, "Mg/ha"), Grid(g, "Mg/ha"), Grid(g, "m")};
    for (std::size_t i = 0; i < out.crm.size(); ++i) {
        const float c = static_cast<float>(crm(rng));
        const float z = static_cast<float>(elev(rng));
        out.crm.set(i, c);
        out.elev.set(i, z);
        const double n = b0 + b1 * double(c) + b2 * double(z) + (sigma > 0 ? e(rng) : 0.0);
        out.nsvb.set(i, static_cast<float>(n));
    }
    out.nsvb.mask(17);
    out.crm.mask(18);
    return out;
}

} // namespace

TEST(Carbon, ModelStockExamples)
{
    // 141,297 km^2 as 1 km cells.
    const auto g = testutil::geom(141297, 1, 1000.0);
    EXPECT_DOUBLE_EQ(g.area_ha(), 14129700.0);
    const auto s = model_stock(Grid(g, 100.0f), 2019, Allometry::crm);
    EXPECT_NEAR(s.total_mt, 1412.97, 1e-9);
    EXPECT_EQ(s.region_area_ha, 14129700.0);
    EXPECT_EQ(s.method, StockMethod::model);
    EXPECT_EQ(s.quantity, StockQuantity::agb);
    EXPECT_EQ(model_stock(Grid(g, 0.0f), 2019, Allometry::crm).total_mt, 0.0);
    EXPECT_NEAR(model_stock(Grid(g, 200.0f), 2019, Allometry::crm).total_mt, 2 * s.total_mt, 1e-9);
    EXPECT_THROW(model_stock(Grid(g), 2019, Allometry::crm), InvalidArgument);
}

TEST(Carbon, ModelStockAreaBasis)
{
    Grid g(testutil::geom(10, 10, 100.0), 50.0f); // 1 ha cells
    for (std::size_t i = 0; i < 40; ++i) {
        g.mask(i);
    }
    EXPECT_NEAR(model_stock(g, 2005, Allometry::nsvb, AreaBasis::full_extent).total_mt, 50.0 * 100 / 1e6, 1e-12);
    const auto v = model_stock(g, 2005, Allometry::nsvb, AreaBasis::valid_cells);
    EXPECT_NEAR(v.total_mt, 50.0 * 60 / 1e6, 1e-12);
    EXPECT_EQ(v.region_area_ha, 60.0);
}

TEST(Carbon, ModelStockIsLinear)
{
    std::mt19937_64 rng(131);
    const auto geom = testutil::geom(40, 30, 30.0);
    const auto a = testutil::random_grid(geom, rng, 0, 300);
    const auto b = testutil::random_grid(geom, rng, 0, 300);
    Grid sum(geom);
    for (std::size_t i = 0; i < a.size(); ++i) {
        sum.set(i, a.value(i) + b.value(i));
    }
    const auto st = [](const Grid& g) { return model_stock(g, 2019, Allometry::crm).total_mt; };
    EXPECT_NEAR(st(sum), st(a) + st(b), 1e-6 * st(sum));
}

TEST(Carbon, DesignStockExamples)
{
    const std::vector<PlotRecord> one{plot_with(50.0)};
    EXPECT_NEAR(design_stock(one, 1e6, 2019, Allometry::crm).total_mt, 50.0, 1e-12);
    EXPECT_NEAR(design_stock(one, 1e6, 2019, Allometry::nsvb).total_mt, 55.0, 1e-12);
    const std::vector<PlotRecord> zeros(5, plot_with(0.0));
    EXPECT_EQ(design_stock(zeros, 1e6, 2019, Allometry::crm).total_mt, 0.0);

    std::vector<PlotRecord> many;
    std::mt19937_64 rng(137);
    std::uniform_real_distribution<double> u(0, 400);
    for (int i = 0; i < 100; ++i) {
        many.push_back(plot_with(u(rng)));
    }
    const double total = design_stock(many, 5e6, 2005, Allometry::crm).total_mt;
    std::shuffle(many.begin(), many.end(), rng);
    EXPECT_NEAR(design_stock(many, 5e6, 2005, Allometry::crm).total_mt, total, 1e-9);
    std::vector<PlotRecord> doubled = many;
    for (auto& p : doubled) {
        p.agb_crm *= 2;
    }
    EXPECT_NEAR(design_stock(doubled, 5e6, 2005, Allometry::crm).total_mt, 2 * total, 1e-9);

    EXPECT_THROW(design_stock({}, 1e6, 2019, Allometry::crm), InvalidArgument);
    EXPECT_THROW(design_stock(one, 0.0, 2019, Allometry::crm), InvalidArgument);
    EXPECT_EQ(design_stock(one, 1e6, 2019, Allometry::crm).method, StockMethod::design);
}

TEST(Carbon, WeightedCarbonFraction)
{
    EXPECT_DOUBLE_EQ(weighted_carbon_fraction({{{"a", 0.5, 1.0}}}), 0.5);
    EXPECT_NEAR(weighted_carbon_fraction({{{"a", 0.48, 0.6}, {"b", 0.52, 0.4}}}), 0.496, 1e-15);
    EXPECT_NEAR(weighted_carbon_fraction({{{"a", 0.47, 0.1}, {"b", 0.47, 0.25}, {"c", 0.47, 0.65}}}), 0.47, 1e-15);

    EXPECT_THROW(CarbonFractionTable{}.validate(), InvalidArgument);
    EXPECT_THROW((CarbonFractionTable{{{"a", 0.5, 0.6}}}.validate()), InvalidArgument);
    EXPECT_THROW((CarbonFractionTable{{{"a", 1.5, 1.0}}}.validate()), InvalidArgument);
    EXPECT_THROW((CarbonFractionTable{{{"a", 0.5, -0.1}, {"b", 0.5, 1.1}}}.validate()), InvalidArgument);
}

TEST(Carbon, LoadCarbonFractions)
{
    const auto dir = testutil::temp_dir("carbon_fractions");
    {
        std::ofstream f(dir / "cf.csv");
        f << "species_code,fraction,agb_share,year\n"
             "316,0.48,0.6,2005\n318,0.52,0.4,2005\n"
             "316,0.49,0.5,2019\n318,0.47,0.5,2019\n";
    }
    const auto tables = load_carbon_fractions(dir / "cf.csv");
    ASSERT_EQ(tables.size(), 2u);
    EXPECT_NEAR(weighted_carbon_fraction(tables.at(2005)), 0.496, 1e-12);
    EXPECT_NEAR(weighted_carbon_fraction(tables.at(2019)), 0.48, 1e-12);
    {
        std::ofstream f(dir / "bad.csv");
        f << "species_code,fraction,agb_share,year\n316,0.48,0.7,2005\n";
    }
    EXPECT_THROW(load_carbon_fractions(dir / "bad.csv"), Error);
}

TEST(Carbon, AgbToAgc)
{
    const auto crm = agb_to_agc(estimate(1063.90, 2019), kCrmCarbonFraction);
    EXPECT_NEAR(crm.total_mt, 531.95, 1e-9);
    EXPECT_EQ(crm.quantity, StockQuantity::agc);
    EXPECT_EQ(agb_to_agc(estimate(0.0, 2019), 0.5).total_mt, 0.0);
    const auto nsvb = agb_to_agc(estimate(1213.03, 2019, Allometry::nsvb), 0.48366);
    EXPECT_NEAR(nsvb.total_mt, 586.69, 0.005);
    EXPECT_THROW(agb_to_agc(crm, 0.5), InvalidArgument);
    EXPECT_THROW(agb_to_agc(estimate(1.0, 2019), 0.0), InvalidArgument);
    EXPECT_THROW(agb_to_agc(estimate(1.0, 2019), 1.0), InvalidArgument);
}

TEST(Carbon, StockChange)
{
    EXPECT_NEAR(stock_change(estimate(1038.87, 2019, Allometry::crm, StockMethod::design),
                             estimate(910.29, 2005, Allometry::crm, StockMethod::design)),
                128.58, 1e-9);
    EXPECT_NEAR(stock_change(estimate(1213.03, 2019, Allometry::nsvb), estimate(1106.10, 2005, Allometry::nsvb)),
                106.93, 1e-9);
    EXPECT_EQ(stock_change(estimate(5.0, 2019), estimate(5.0, 2005)), 0.0);
    EXPECT_LT(stock_change(estimate(4.0, 2019), estimate(5.0, 2005)), 0.0);
    EXPECT_THROW(stock_change(estimate(1, 2019, Allometry::nsvb), estimate(1, 2005, Allometry::crm)), InvalidArgument);
    EXPECT_THROW(stock_change(estimate(1, 2019, Allometry::crm, StockMethod::design), estimate(1, 2005)),
                 InvalidArgument);
}

TEST(Carbon, AgcCommutesWithChangeUnderFixedFraction)
{
    const auto later = estimate(1063.90, 2019);
    const auto earlier = estimate(935.10, 2005);
    const double a = stock_change(agb_to_agc(later, 0.5), agb_to_agc(earlier, 0.5));
    EXPECT_NEAR(a, 0.5 * stock_change(later, earlier), 1e-9);
}

TEST(Carbon, ChangeDifferenceMapIsOrderFree)
{
    std::mt19937_64 rng(139);
    const auto g = testutil::geom(30, 30, 30.0);
    const auto c05 = testutil::random_grid(g, rng, 0, 300);
    const auto c19 = testutil::random_grid(g, rng, 0, 300);
    const auto n05 = testutil::random_grid(g, rng, 0, 300);
    const auto n19 = testutil::random_grid(g, rng, 0, 300);
    const auto a = difference(difference(n19, n05), difference(c19, c05));
    const auto b = difference(difference(n19, c19), difference(n05, c05));
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(a.value(i), b.value(i), 1e-3);
    }
}

TEST(Carbon, RescaleRecoversGeneratorExactly)
{
    const auto g = rescale_grids(149, 0.0);
    const auto fit = rescale_fit(g.nsvb, g.crm, g.elev, 1000000, 0.8, 7);
    // Float storage of the synthetic NSVB limits the exactness of recovery.
    EXPECT_NEAR(fit.beta0, 9.555, 1e-4);
    EXPECT_NEAR(fit.beta1, 1.135, 1e-6);
    EXPECT_NEAR(fit.beta2, -0.023, 1e-6);
    EXPECT_EQ(fit.n_train + fit.n_test, 300u * 300u - 2u);
    EXPECT_NEAR(double(fit.n_train), 0.8 * double(fit.n_train + fit.n_test), 1.0);
    EXPECT_LT(*fit.test_rmse, 1e-3);

    const auto all = rescale_fit(g.nsvb, g.crm, g.elev, 1000000, 1.0, 7);
    EXPECT_EQ(all.n_test, 0u);
    EXPECT_FALSE(all.test_rmse);
    EXPECT_NEAR(all.beta1, 1.135, 1e-6);
}

TEST(Carbon, RescaleDoubleGeneratorRecoveredToOneMillionth)
{
    // Exactly representable generator on float grids: integer CRM and elevation,
    // coefficients that are dyadic rationals.
    const auto geom = testutil::geom(100, 100, 30.0);
    Grid crm(geom), elev(geom), nsvb(geom);
    std::mt19937_64 rng(151);
    std::uniform_int_distribution<int> c(0, 250), z(0, 1500);
    for (std::size_t i = 0; i < crm.size(); ++i) {
        const int cv = c(rng), zv = z(rng);
        crm.set(i, float(cv));
        elev.set(i, float(zv));
        nsvb.set(i, static_cast<float>(9.5 + 1.125 * cv - 0.015625 * zv));
    }
    const auto fit = rescale_fit(nsvb, crm, elev, 5000, 0.8, 3);
    EXPECT_NEAR(fit.beta0, 9.5, 1e-6);
    EXPECT_NEAR(fit.beta1, 1.125, 1e-6);
    EXPECT_NEAR(fit.beta2, -0.015625, 1e-6);
    EXPECT_EQ(fit.n_train, 4000u);
    EXPECT_EQ(fit.n_test, 1000u);
}

TEST(Carbon, RescaleIdentityMap)
{
    const auto g = rescale_grids(157, 0.0, 0.0, 1.0, 0.0);
    const auto fit = rescale_fit(g.nsvb, g.crm, g.elev, 20000, 0.8, 1);
    EXPECT_NEAR(fit.beta0, 0.0, 1e-6);
    EXPECT_NEAR(fit.beta1, 1.0, 1e-9);
    EXPECT_NEAR(fit.beta2, 0.0, 1e-9);
}

TEST(Carbon, RescaleNoiseLevelOracle)
{
    const auto g = rescale_grids(163, 14.0);
    const auto fit = rescale_fit(g.nsvb, g.crm, g.elev, 1000000, 0.8, 11);
    EXPECT_NEAR(*fit.test_rmse, 14.0, 0.05 * 14.0);
    EXPECT_NEAR(*fit.test_me, 0.0, 0.5);
    EXPECT_GT(*fit.test_r2, 0.9);
    EXPECT_NEAR(fit.beta1, 1.135, 0.01);
}

TEST(Carbon, RescaleDeterminismAndErrors)
{
    const auto g = rescale_grids(167, 14.0);
    const auto a = rescale_fit(g.nsvb, g.crm, g.elev, 10000, 0.8, 5);
    const auto b = rescale_fit(g.nsvb, g.crm, g.elev, 10000, 0.8, 5);
    EXPECT_EQ(a.beta0, b.beta0);
    EXPECT_EQ(*a.test_rmse, *b.test_rmse);
    const auto c = rescale_fit(g.nsvb, g.crm, g.elev, 10000, 0.8, 6);
    EXPECT_NE(a.beta0, c.beta0);

    const auto geom = g.crm.geometry();
    EXPECT_THROW(rescale_fit(g.nsvb, Grid(geom, 5.0f), g.elev), InvalidArgument);
    EXPECT_THROW(rescale_fit(g.nsvb, g.crm, g.elev, 100, 0.0), InvalidArgument);
    EXPECT_THROW(rescale_fit(g.nsvb, g.crm, Grid(testutil::geom(3, 3), 1.0f)), AlignmentError);
    Grid sparse(geom);
    sparse.set(0, 1.0f);
    EXPECT_THROW(rescale_fit(g.nsvb, sparse, g.elev), InvalidArgument);
}

TEST(Carbon, RescaleApply)
{
    const auto g = rescale_grids(173, 0.0);
    RescaleFit fit;
    fit.beta0 = 9.555;
    fit.beta1 = 1.135;
    fit.beta2 = -0.023;
    const auto out = rescale_apply(fit, g.crm, g.elev);
    EXPECT_FALSE(out.valid(18));
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.valid(i)) {
            EXPECT_EQ(out.value(i), static_cast<float>(fit.predict(g.crm.value(i), g.elev.value(i))));
        }
    }
}
