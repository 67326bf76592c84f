#include "agbmap/footprint.hpp"
#include "agbmap/inventory.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>

using namespace agbmap;

namespace {

constexpr double kCircle = std::numbers::pi * 7.32 * 7.32;

double total(const OverlapWeights& w)
{
    double s = 0.0;
    for (const auto& c : w) {
        s += c.weight;
    }
    return s;
}

bool in_footprint(const PlotFootprint& fp, double x, double y)
{
    for (const auto& c : fp.subplot_centers) {
        if ((x - c.x) * (x - c.x) + (y - c.y) * (y - c.y) <= fp.subplot_radius * fp.subplot_radius) {
            return true;
        }
    }
    return false;
}

} // namespace

TEST(Footprint, SubplotCenters)
{
    const auto c = subplot_centers({0, 0});
    EXPECT_EQ(c[0], (Point{0, 0}));
    EXPECT_NEAR(c[1].x, 0.0, 1e-12);
    EXPECT_NEAR(c[1].y, 36.6, 1e-12);
    EXPECT_NEAR(c[2].x, 36.6 * std::sin(120.0 * std::numbers::pi / 180.0), 1e-12);
    EXPECT_NEAR(c[2].y, 36.6 * std::cos(120.0 * std::numbers::pi / 180.0), 1e-12);
    EXPECT_NEAR(c[2].x, 31.70, 0.005);
    EXPECT_NEAR(c[2].y, -18.30, 0.005);
    EXPECT_NEAR(c[3].x, -31.70, 0.005);

    const double side = 36.6 * std::sqrt(3.0);
    EXPECT_NEAR(distance(c[1], c[2]), side, 1e-9);
    EXPECT_NEAR(distance(c[2], c[3]), side, 1e-9);
    EXPECT_NEAR(distance(c[3], c[1]), side, 1e-9);
    for (int i = 1; i < 4; ++i) {
        EXPECT_NEAR(distance(c[0], c[i]), 36.6, 1e-12);
    }

    const auto shifted = subplot_centers({1000, -500});
    for (int i = 0; i < 4; ++i) {
        EXPECT_NEAR(shifted[i].x - c[i].x, 1000, 1e-9);
        EXPECT_NEAR(shifted[i].y - c[i].y, -500, 1e-9);
    }
    EXPECT_NEAR(PlotFootprint({0, 0}).area_m2(), plot_area_m2(), 1e-12);
}

TEST(Footprint, CircleInsidePixel)
{
    EXPECT_NEAR(circle_rect_intersection({15, 15}, 7.32, 0, 30, 0, 30), kCircle, 1e-9);
    EXPECT_NEAR(kCircle, std::numbers::pi * 7.32 * 7.32, 1e-9);
    EXPECT_NEAR(kCircle, 168.34, 1e-3 * 168.34);
    EXPECT_EQ(circle_rect_intersection({100, 100}, 7.32, 0, 30, 0, 30), 0.0);
}

TEST(Footprint, CircleOnCorner)
{
    for (auto [x0, x1, y0, y1] : {std::array{0.0, 30.0, 0.0, 30.0}, std::array{-30.0, 0.0, 0.0, 30.0},
                                  std::array{0.0, 30.0, -30.0, 0.0}, std::array{-30.0, 0.0, -30.0, 0.0}}) {
        const double w = circle_rect_intersection({0, 0}, 7.32, x0, x1, y0, y1);
        EXPECT_NEAR(w, kCircle / 4, 1e-9);
        EXPECT_NEAR(w, std::numbers::pi * 7.32 * 7.32 / 4.0, 1e-9);
    }
}

TEST(Footprint, CircleRectMatchesGridQuadrature)
{
    std::mt19937_64 rng(47);
    std::uniform_real_distribution<double> u(-10, 10);
    const double h = 0.01;
    for (int t = 0; t < 20; ++t) {
        const Point c{u(rng), u(rng)};
        const double x0 = -3.0, x1 = 4.5, y0 = -1.0, y1 = 6.0;
        double area = 0.0;
        for (double x = x0 + h / 2; x < x1; x += h) {
            for (double y = y0 + h / 2; y < y1; y += h) {
                if ((x - c.x) * (x - c.x) + (y - c.y) * (y - c.y) <= 7.32 * 7.32) {
                    area += h * h;
                }
            }
        }
        EXPECT_NEAR(circle_rect_intersection(c, 7.32, x0, x1, y0, y1), area, 1e-4 * kCircle + 0.02) << t;
    }
}

TEST(Footprint, WeightsInsideGridSumToPlotArea)
{
    const auto g = testutil::geom(20, 20, 30.0);
    std::mt19937_64 rng(53);
    std::uniform_real_distribution<double> u(200, 400);
    for (int t = 0; t < 50; ++t) {
        const PlotFootprint fp({u(rng), u(rng)});
        const auto w = pixel_overlap_weights(fp, g);
        EXPECT_NEAR(total(w), plot_area_m2(), 1e-3 * plot_area_m2());
        for (std::size_t i = 0; i < w.size(); ++i) {
            EXPECT_GT(w[i].weight, 0.0);
            if (i > 0) {
                EXPECT_LT(std::pair(w[i - 1].row, w[i - 1].col), std::pair(w[i].row, w[i].col));
            }
        }
    }
    // One huge pixel holds the whole plot.
    const auto w = pixel_overlap_weights(PlotFootprint({500, 500}), testutil::geom(1, 1, 1000.0));
    ASSERT_EQ(w.size(), 1u);
    EXPECT_NEAR(w[0].weight, plot_area_m2(), 1e-9);
    EXPECT_NEAR(w[0].weight, 673.36, 1e-3 * 673.36);
}

TEST(Footprint, WeightsEdgeAndOutside)
{
    const auto g = testutil::geom(10, 10, 30.0);
    EXPECT_TRUE(pixel_overlap_weights(PlotFootprint({-500, -500}), g).empty());
    const auto edge = pixel_overlap_weights(PlotFootprint({0, 150}), g);
    EXPECT_GT(total(edge), 0.0);
    EXPECT_LT(total(edge), plot_area_m2() * 0.75);
}

TEST(Footprint, WeightsTranslationCovariant)
{
    const auto g = testutil::geom(20, 20, 30.0, 1000.0, 2000.0);
    const auto shifted = testutil::geom(20, 20, 30.0, 1000.0 + 90.0, 2000.0 - 60.0);
    const PlotFootprint a({1290.3, 2310.7});
    const PlotFootprint b({1290.3 + 90.0, 2310.7 - 60.0});
    const auto wa = pixel_overlap_weights(a, g);
    const auto wb = pixel_overlap_weights(b, shifted);
    ASSERT_EQ(wa.size(), wb.size());
    for (std::size_t i = 0; i < wa.size(); ++i) {
        EXPECT_EQ(wa[i].col, wb[i].col);
        EXPECT_EQ(wa[i].row, wb[i].row);
        EXPECT_NEAR(wa[i].weight, wb[i].weight, 1e-6);
    }
}

TEST(Footprint, WeightsMatchMonteCarlo)
{
    const auto g = testutil::geom(20, 20, 30.0);
    const PlotFootprint fp({301.3, 287.9});
    const auto w = pixel_overlap_weights(fp, g);

    // Sample each subplot's bounding square separately; the circles are disjoint.
    std::mt19937_64 rng(59);
    std::uniform_real_distribution<double> u(-7.32, 7.32);
    const int per_subplot = 250000;
    const double box = 14.64 * 14.64;
    std::map<std::pair<int, int>, double> mc;
    for (const auto& c : fp.subplot_centers) {
        for (int i = 0; i < per_subplot; ++i) {
            const double dx = u(rng), dy = u(rng);
            if (dx * dx + dy * dy > 7.32 * 7.32) {
                continue;
            }
            const double x = c.x + dx, y = c.y + dy;
            const int col = static_cast<int>(std::floor(x / 30.0));
            const int row = static_cast<int>(std::floor((g.y_max() - y) / 30.0));
            mc[{row, col}] += box / per_subplot;
        }
    }
    double mc_total = 0.0;
    for (const auto& [k, v] : mc) {
        mc_total += v;
    }
    EXPECT_NEAR(total(w), mc_total, 0.005 * mc_total);
    for (const auto& c : w) {
        EXPECT_NEAR(c.weight, mc[std::make_pair(c.row, c.col)], 0.005 * plot_area_m2()) << c.row << "," << c.col;
    }
    for (const auto& [k, v] : mc) {
        const bool present = std::any_of(w.begin(), w.end(), [&](const CellWeight& c) {
            return c.row == k.first && c.col == k.second;
        });
        EXPECT_TRUE(present || v < 0.005 * plot_area_m2());
    }
}

TEST(Footprint, ExtractConstantAndSymmetric)
{
    EXPECT_NEAR(*extract_weighted_mean(Grid(testutil::geom(20, 20, 30.0), 7.0f), PlotFootprint({300, 300})), 7.0,
                1e-12);

    // Only subplot 1 overlaps this 2x2 grid, centered on its middle corner.
    Grid g(testutil::geom(2, 2, 10.0), "x");
    g.set(0, 0.0f);
    g.set(1, 0.0f);
    g.set(2, 10.0f);
    g.set(3, 10.0f);
    const PlotFootprint fp({10, 10});
    const auto w = pixel_overlap_weights(fp, g.geometry());
    ASSERT_EQ(w.size(), 4u);
    EXPECT_NEAR(*extract_weighted_mean(g, fp), 5.0, 1e-12);

    g.mask(0);
    g.mask(1);
    EXPECT_NEAR(*extract_weighted_mean(g, fp), 10.0, 1e-12);
    g.mask(2);
    g.mask(3);
    EXPECT_FALSE(extract_weighted_mean(g, fp));
    EXPECT_FALSE(extract_weighted_mean(g, OverlapWeights{}));
}

TEST(Footprint, ExtractMatchesFineQuadrature)
{
    std::mt19937_64 rng(61);
    const auto g = testutil::random_grid(testutil::geom(12, 12, 30.0), rng, 0.0, 300.0);
    const PlotFootprint fp({181.7, 176.2});
    const double h = 0.02;
    double num = 0.0, den = 0.0;
    for (const auto& c : fp.subplot_centers) {
        for (double x = c.x - 7.32 + h / 2; x < c.x + 7.32; x += h) {
            for (double y = c.y - 7.32 + h / 2; y < c.y + 7.32; y += h) {
                if (!in_footprint(fp, x, y)) {
                    continue;
                }
                const int col = static_cast<int>(std::floor(x / 30.0));
                const int row = static_cast<int>(std::floor((g.geometry().y_max() - y) / 30.0));
                num += g.value(col, row);
                den += 1.0;
            }
        }
    }
    const double oracle = num / den;
    EXPECT_NEAR(*extract_weighted_mean(g, fp), oracle, 1e-3 * std::abs(oracle));
}

TEST(Footprint, ExtractIsLinear)
{
    std::mt19937_64 rng(67);
    const auto geom = testutil::geom(15, 15, 30.0);
    auto a = testutil::random_grid(geom, rng, -50, 50);
    const auto b = testutil::random_grid(geom, rng, -50, 50);
    const double alpha = 2.5, beta = -0.75;
    Grid combo(geom);
    for (std::size_t i = 0; i < a.size(); ++i) {
        combo.set(i, static_cast<float>(alpha * a.value(i) + beta * b.value(i)));
    }
    const PlotFootprint fp({222.2, 230.1});
    const double lhs = *extract_weighted_mean(combo, fp);
    const double rhs = alpha * *extract_weighted_mean(a, fp) + beta * *extract_weighted_mean(b, fp);
    EXPECT_NEAR(lhs, rhs, 1e-4);
}
