#include "agbmap/footprint.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace agbmap;

namespace {

void BM_OverlapWeights(benchmark::State& state)
{
    const GridGeometry geom{1000, 1000, 0.0, 0.0, 30.0};
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(200.0, 29800.0);
    std::vector<PlotFootprint> plots;
    for (int i = 0; i < 256; ++i) {
        plots.emplace_back(Point{u(rng), u(rng)});
    }
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(pixel_overlap_weights(plots[i++ % plots.size()], geom));
    }
}
BENCHMARK(BM_OverlapWeights);

void BM_WeightedMean(benchmark::State& state)
{
    const GridGeometry geom{200, 200, 0.0, 0.0, 30.0};
    Grid g(geom, 150.0f, "Mg/ha");
    const auto w = pixel_overlap_weights(PlotFootprint({3000.0, 3000.0}), geom);
    for (auto _ : state) {
        benchmark::DoNotOptimize(extract_weighted_mean(g, w));
    }
}
BENCHMARK(BM_WeightedMean);

} // namespace
