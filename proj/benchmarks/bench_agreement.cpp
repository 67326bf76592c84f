#include "agbmap/agreement.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace agbmap;

namespace {

PairedSample sample(std::size_t n)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> y(0.0, 300.0);
    std::normal_distribution<double> e(0.0, 40.0);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = y(rng);
        b[i] = a[i] + e(rng);
    }
    return {std::move(a), std::move(b)};
}

void BM_BasicMetrics(benchmark::State& state)
{
    const auto p = sample(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(basic_metrics(p, 130.0));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BasicMetrics)->Arg(500)->Arg(100000);

void BM_AcDecompose(benchmark::State& state)
{
    const auto p = sample(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(ac_decompose(p));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AcDecompose)->Arg(500)->Arg(100000);

void BM_KsStatistic(benchmark::State& state)
{
    const auto p = sample(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(ks_statistic(p.y, p.yhat));
    }
}
BENCHMARK(BM_KsStatistic)->Arg(1000)->Arg(100000);

} // namespace
