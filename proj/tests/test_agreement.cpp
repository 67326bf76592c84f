#include "agbmap/agreement.hpp"
#include "agbmap/error.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace agbmap;

namespace {

PairedSample random_pairs(std::uint64_t seed, std::size_t n, double noise, double bias = 0.0, double slope = 1.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 300.0);
    std::normal_distribution<double> e(0.0, noise);
    std::vector<double> y(n), yhat(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = u(rng);
        yhat[i] = bias + slope * y[i] + e(rng);
    }
    return {y, yhat};
}

// Independent long-double summations of the agreement coefficient pieces.
long double oracle_ac(const PairedSample& p)
{
    long double ybar = 0, hbar = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        ybar += p.y[i];
        hbar += p.yhat[i];
    }
    ybar /= p.size();
    hbar /= p.size();
    long double ssd = 0, spod = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        ssd += (p.y[i] - p.yhat[i]) * (long double)(p.y[i] - p.yhat[i]);
        spod += (std::fabs(hbar - ybar) + std::fabs(p.y[i] - ybar)) * (std::fabs(hbar - ybar) + std::fabs(p.yhat[i] - hbar));
    }
    return 1.0L - ssd / spod;
}

} // namespace

TEST(Agreement, PerfectFit)
{
    const PairedSample p({1, 4, 9, 16}, {1, 4, 9, 16});
    const auto m = basic_metrics(p, 10.0);
    EXPECT_EQ(m.rmse, 0.0);
    EXPECT_EQ(m.mae, 0.0);
    EXPECT_EQ(m.me, 0.0);
    EXPECT_EQ(*m.r2, 1.0);
    EXPECT_EQ(*willmott_dr(p), 1.0);
    const auto ac = ac_decompose(p);
    EXPECT_EQ(ac.ac, 1.0);
    EXPECT_EQ(ac.ac_s, 1.0);
    EXPECT_EQ(ac.ac_u, 1.0);
    const auto g = gmfr_fit(p);
    EXPECT_NEAR(g.b, 1.0, 1e-15);
    EXPECT_NEAR(g.a, 0.0, 1e-12);
}

TEST(Agreement, SwappedPairExample)
{
    const auto m = basic_metrics(PairedSample({0, 2}, {2, 0}), 1.0);
    EXPECT_DOUBLE_EQ(m.rmse, 2.0);
    EXPECT_DOUBLE_EQ(m.mae, 2.0);
    EXPECT_DOUBLE_EQ(m.me, 0.0);
    EXPECT_DOUBLE_EQ(*m.r2, -3.0);
    EXPECT_DOUBLE_EQ(*m.pct_rmse, 200.0);
    EXPECT_EQ(m.n, 2u);
}

TEST(Agreement, PercentRmseFromReportedRow)
{
    // 100 * 60.33 / 45.97 back-solves the training mean to 131.24.
    const double ybar = 131.24;
    // Pairs with RMSE exactly 60.33: alternating errors of +-60.33.
    std::vector<double> y(100, 150.0), yhat(100);
    for (std::size_t i = 0; i < y.size(); ++i) {
        yhat[i] = y[i] + (i % 2 ? 60.33 : -60.33);
    }
    const auto m = basic_metrics(PairedSample(y, yhat), ybar);
    EXPECT_NEAR(m.rmse, 60.33, 1e-9);
    EXPECT_NEAR(*m.pct_rmse, 45.97, 0.005);
    EXPECT_NEAR(*m.pct_mae, 100 * 60.33 / ybar, 1e-9);
    EXPECT_FALSE(m.r2); // y has no variance
    EXPECT_FALSE(basic_metrics(PairedSample(y, yhat), 0.0).pct_rmse);
}

TEST(Agreement, MetricsMatchDirectFormulas)
{
    const auto p = random_pairs(79, 500, 40.0, 5.0, 0.9);
    const auto m = basic_metrics(p, 123.0);
    const double n = double(p.size());
    double sse = 0, sae = 0, se = 0, ybar = std::accumulate(p.y.begin(), p.y.end(), 0.0) / n, sst = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double e = p.y[i] - p.yhat[i];
        sse += e * e;
        sae += std::abs(e);
        se += e;
        sst += (p.y[i] - ybar) * (p.y[i] - ybar);
    }
    EXPECT_NEAR(m.rmse, std::sqrt(sse / n), 1e-9);
    EXPECT_NEAR(m.mae, sae / n, 1e-9);
    EXPECT_NEAR(m.me, se / n, 1e-9);
    EXPECT_NEAR(*m.r2, 1 - sse / sst, 1e-12);
    EXPECT_NEAR(*m.pct_rmse, 100 * m.rmse / 123.0, 1e-9);
}

TEST(Agreement, ErrorOrderingProperty)
{
    for (std::uint64_t s = 0; s < 200; ++s) {
        std::mt19937_64 rng(s);
        std::size_t n = 1 + rng() % 30;
        const auto p = random_pairs(s + 1000, n, 1.0 + double(rng() % 50), double(rng() % 40) - 20.0);
        const auto m = basic_metrics(p, 100.0);
        EXPECT_GE(m.rmse + 1e-12, m.mae);
        EXPECT_GE(m.mae + 1e-12, std::abs(m.me));
    }
}

TEST(Agreement, InvalidPairs)
{
    EXPECT_THROW(basic_metrics(PairedSample({}, {}), 1.0), InvalidArgument);
    EXPECT_THROW(basic_metrics(PairedSample({1, 2}, {1}), 1.0), InvalidArgument);
    EXPECT_THROW(basic_metrics(PairedSample({1, std::nan("")}, {1, 2}), 1.0), InvalidArgument);
}

TEST(Agreement, WillmottExamples)
{
    EXPECT_DOUBLE_EQ(*willmott_dr(PairedSample({1, 3}, {2, 2})), 0.5);
    EXPECT_DOUBLE_EQ(*willmott_dr(PairedSample({1, 3}, {11, 13})), -0.8);
    EXPECT_FALSE(willmott_dr(PairedSample({2, 2}, {1, 3})));
}

TEST(Agreement, WillmottRangeAndAsymmetry)
{
    bool asymmetric = false;
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto p = random_pairs(s, 20, 80.0, double(s % 7) * 30.0 - 90.0, 0.5 + double(s % 5) * 0.3);
        const double d = *willmott_dr(p);
        EXPECT_GE(d, -1.0);
        EXPECT_LE(d, 1.0);
        EXPECT_DOUBLE_EQ(*willmott_dr(PairedSample(p.y, p.y)), 1.0);
        const double swapped = *willmott_dr(PairedSample(p.yhat, p.y));
        asymmetric |= std::abs(swapped - d) > 1e-9;
    }
    EXPECT_TRUE(asymmetric);
}

TEST(Agreement, GmfrExamples)
{
    const auto g = gmfr_fit(PairedSample({1, 2, 3}, {2, 4, 6}));
    EXPECT_NEAR(g.b, 0.5, 1e-15);
    EXPECT_NEAR(g.a, 0.0, 1e-15);
    // The inverse line maps y back onto yhat exactly here.
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(g.yhat_fitted[i], 2.0 * double(i + 1), 1e-12);
        EXPECT_NEAR(g.y_fitted[i], double(i + 1), 1e-12);
    }
    EXPECT_LT(gmfr_fit(PairedSample({1, 2, 3, 4}, {9, 7, 8, 1})).b, 0.0);
    EXPECT_THROW(gmfr_fit(PairedSample({1, 1, 1}, {1, 2, 3})), InvalidArgument);
}

TEST(Agreement, GmfrDuality)
{
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto p = random_pairs(s, 40, 30.0, 10.0, s % 2 ? 0.8 : -0.6);
        const auto f = gmfr_fit(p);
        const auto r = gmfr_fit(PairedSample(p.yhat, p.y));
        EXPECT_NEAR(r.b, 1.0 / f.b, 1e-12 * std::abs(r.b));
    }
}

TEST(Agreement, AcOffsetIsSystematic)
{
    const auto base = random_pairs(83, 100, 0.0);
    std::vector<double> shifted(base.y);
    for (auto& v : shifted) {
        v += 25.0;
    }
    const PairedSample p(base.y, shifted);
    const auto ac = ac_decompose(p);
    EXPECT_NEAR(ac.ac_u, 1.0, 1e-12);
    EXPECT_LT(ac.ac_s, 1.0);
    // Direct evaluation of the unsystematic sum for the parallel GMFR line.
    EXPECT_NEAR(ac.spd_u, 0.0, 1e-9);
}

TEST(Agreement, AcMatchesSummationOracleAndIdentity)
{
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto p = random_pairs(s + 500, 5 + s, 50.0, double(s % 11) * 5 - 25, 0.7 + 0.01 * double(s));
        const auto ac = ac_decompose(p);
        EXPECT_NEAR(ac.ac, double(oracle_ac(p)), 1e-12);
        EXPECT_NEAR(ac.ac_s + ac.ac_u - 1.0, ac.ac, 1e-12 * std::max(1.0, std::abs(ac.ac)));
        EXPECT_NEAR(agreement_coefficient(p), ac.ac, 1e-15);
        // Symmetric in its arguments.
        EXPECT_NEAR(agreement_coefficient(PairedSample(p.yhat, p.y)), ac.ac, 1e-12);
    }
    EXPECT_THROW(ac_decompose(PairedSample({2, 2}, {2, 2})), InvalidArgument);
}

TEST(Agreement, EcdfExamples)
{
    const std::vector<double> one{5};
    const Ecdf f1(one);
    EXPECT_EQ(f1(4.999), 0.0);
    EXPECT_EQ(f1(5.0), 1.0);
    EXPECT_EQ(f1(100.0), 1.0);
    const std::vector<double> four{4, 1, 3, 2};
    EXPECT_EQ(Ecdf(four)(2.5), 0.5);
    EXPECT_THROW(Ecdf(std::vector<double>{}), InvalidArgument);
}

TEST(Agreement, EcdfRankOracle)
{
    std::mt19937_64 rng(89);
    std::uniform_int_distribution<int> u(0, 40);
    std::vector<double> v(300);
    for (auto& x : v) {
        x = u(rng);
    }
    const Ecdf f(v);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (double x : v) {
        // Largest rank among ties.
        const auto rank = std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin();
        EXPECT_DOUBLE_EQ(f(x), double(rank) / double(v.size()));
    }
    EXPECT_EQ(f(sorted.back()), 1.0);
    const auto table = f.table();
    for (std::size_t i = 1; i < table.size(); ++i) {
        EXPECT_LT(table[i - 1].first, table[i].first);
        EXPECT_LT(table[i - 1].second, table[i].second);
    }
    EXPECT_EQ(table.back().second, 1.0);
}

TEST(Agreement, KsExamples)
{
    const std::vector<double> a{1, 2}, b{2, 3}, c{10, 11, 12};
    EXPECT_DOUBLE_EQ(ks_statistic(a, b), 0.5);
    EXPECT_DOUBLE_EQ(ks_statistic(a, a), 0.0);
    EXPECT_DOUBLE_EQ(ks_statistic(a, c), 1.0);
    EXPECT_THROW(ks_statistic(a, std::vector<double>{}), InvalidArgument);
}

TEST(Agreement, KsPropertiesAgainstPooledOracle)
{
    std::mt19937_64 rng(97);
    for (int t = 0; t < 100; ++t) {
        std::uniform_int_distribution<int> n(1, 40), v(0, 20);
        std::vector<double> a(n(rng)), b(n(rng));
        for (auto& x : a) {
            x = v(rng);
        }
        for (auto& x : b) {
            x = v(rng) + t % 3;
        }
        double oracle = 0.0;
        const Ecdf fa(a), fb(b);
        for (double x : a) {
            oracle = std::max(oracle, std::abs(fa(x) - fb(x)));
        }
        for (double x : b) {
            oracle = std::max(oracle, std::abs(fa(x) - fb(x)));
        }
        const double d = ks_statistic(a, b);
        EXPECT_DOUBLE_EQ(d, oracle);
        EXPECT_DOUBLE_EQ(d, ks_statistic(b, a));
        EXPECT_GE(d, 0.0);
        EXPECT_LE(d, 1.0);
    }
}

TEST(Agreement, MultiscaleOnePlotPerHexagonIsScaleInvariant)
{
    // Plots 150 km apart never share a hexagon at 50 km spacing.
    const auto p = random_pairs(101, 12, 20.0);
    LocatedPairs data{p, {}};
    for (std::size_t i = 0; i < p.size(); ++i) {
        data.locations.push_back({double(i % 4) * 150000.0 + 10000.0, double(i / 4) * 150000.0 + 10000.0});
    }
    const BBox region{0, 0, 600000, 450000};
    const auto sweep = default_scale_sweep_km();
    const auto out = multiscale_assessment(data, sweep, 150.0, region);
    ASSERT_EQ(out.size(), sweep.size());
    const auto& ref = *out[0].metrics;
    EXPECT_FALSE(out[0].pph);
    for (const auto& s : out) {
        ASSERT_TRUE(s.metrics);
        EXPECT_EQ(s.n, p.size());
        EXPECT_NEAR(s.metrics->rmse, ref.rmse, 1e-9);
        EXPECT_NEAR(*s.metrics->r2, *ref.r2, 1e-9);
        EXPECT_NEAR(*s.metrics->dr, *ref.dr, 1e-9);
        if (s.scale_km > 1) {
            EXPECT_DOUBLE_EQ(*s.pph, 1.0);
        }
    }
}

TEST(Agreement, MultiscaleNoiseAveragingLowersError)
{
    std::mt19937_64 rng(103);
    const BBox region{0, 0, 300000, 200000};
    std::uniform_real_distribution<double> ux(0, 300000), uy(0, 200000), t(50, 250);
    std::normal_distribution<double> e(0, 50);
    LocatedPairs data;
    for (int i = 0; i < 20000; ++i) {
        const double y = t(rng);
        data.pairs.y.push_back(y);
        data.pairs.yhat.push_back(y + e(rng));
        data.locations.push_back({ux(rng), uy(rng)});
    }
    const std::vector<double> spacings{1, 2, 5, 10, 20, 50};
    const auto out = multiscale_assessment(data, spacings, 150.0, region);
    for (std::size_t i = 1; i < out.size(); ++i) {
        EXPECT_LT(*out[i].metrics->pct_rmse, *out[i - 1].metrics->pct_rmse) << spacings[i];
        EXPECT_GT(*out[i].pph, 0.0);
    }
    // Hexagon mean error shrinks like 1/sqrt(PPH).
    const auto& last = out.back();
    EXPECT_NEAR(last.metrics->rmse, 50.0 / std::sqrt(*last.pph), 0.35 * 50.0 / std::sqrt(*last.pph));
}

TEST(Agreement, MultiscaleSingleHexagonMeanError)
{
    const auto p = random_pairs(107, 50, 20.0, -7.0);
    LocatedPairs data{p, {}};
    std::mt19937_64 rng(109);
    std::uniform_real_distribution<double> u(0, 1000);
    for (std::size_t i = 0; i < p.size(); ++i) {
        data.locations.push_back({u(rng), u(rng)});
    }
    const std::vector<double> huge{1, 5000};
    const auto out = multiscale_assessment(data, huge, 100.0, BBox{0, 0, 1000, 1000});
    EXPECT_EQ(out[1].n, 1u);
    EXPECT_FALSE(out[1].metrics);
    ASSERT_EQ(out[1].aggregates.size(), 1u);
    const auto& a = out[1].aggregates[0];
    EXPECT_NEAR(std::abs(a.y_mean - a.yhat_mean), std::abs(out[0].metrics->me), 1e-9);
}

TEST(Agreement, MultiscaleAgreementRows)
{
    const auto p = random_pairs(113, 400, 30.0);
    LocatedPairs data{p, {}};
    std::mt19937_64 rng(127);
    std::uniform_real_distribution<double> u(0, 100000);
    for (std::size_t i = 0; i < p.size(); ++i) {
        data.locations.push_back({u(rng), u(rng)});
    }
    const std::vector<double> spacings{2, 10, 50};
    const auto out = multiscale_agreement(data, spacings, BBox{0, 0, 100000, 100000});
    ASSERT_EQ(out.size(), 4u);
    EXPECT_EQ(out[0].scale_km, 0.0);
    EXPECT_EQ(out[0].n, 400u);
    EXPECT_NEAR(out[0].ac->ac, agreement_coefficient(p), 1e-15);
    for (std::size_t i = 1; i < out.size(); ++i) {
        EXPECT_EQ(out[i].scale_km, spacings[i - 1]);
        ASSERT_TRUE(out[i].ac);
        EXPECT_NEAR(out[i].ac->ac_s + out[i].ac->ac_u - 1.0, out[i].ac->ac, 1e-12);
    }
}
