#include "agbmap/hexgrid.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace agbmap;

namespace {

void BM_HexAssign(benchmark::State& state)
{
    const BBox region{0, 0, 400000, 300000};
    const HexGrid grid(region, static_cast<double>(state.range(0)));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ux(0, 400000), uy(0, 300000);
    std::vector<Point> pts(4096);
    for (auto& p : pts) {
        p = {ux(rng), uy(rng)};
    }
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(grid.assign(pts[i++ % pts.size()]));
    }
}
BENCHMARK(BM_HexAssign)->Arg(2000)->Arg(50000);

void BM_HexGridBuild(benchmark::State& state)
{
    const BBox region{0, 0, 400000, 300000};
    for (auto _ : state) {
        benchmark::DoNotOptimize(HexGrid(region, static_cast<double>(state.range(0))));
    }
}
BENCHMARK(BM_HexGridBuild)->Arg(2000)->Arg(20000);

} // namespace
