#include "agbmap/ensemble.hpp"
#include "agbmap/learners.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

using namespace agbmap;

namespace {

struct Data {
    FeatureMatrix X;
    std::vector<double> y;
};

Data make_data(std::size_t n)
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> e(0.0, 10.0);
    Data d{FeatureMatrix({"a", "b", "c", "d", "e", "f"}, n), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        auto r = d.X.row(i);
        for (auto& v : r) {
            v = u(rng);
        }
        d.y[i] = 200.0 * r[0] + 80.0 * std::sin(6.0 * r[1]) + 40.0 * r[2] * r[3] + e(rng);
    }
    return d;
}

void BM_TrainBase(benchmark::State& state, LearnerSpec spec)
{
    const auto d = make_data(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(train_base(spec, d.X, d.y, 9));
    }
}
BENCHMARK_CAPTURE(BM_TrainBase, knn, LearnerSpec{KnnParams{10}})->Arg(5000);
BENCHMARK_CAPTURE(BM_TrainBase, bagged, LearnerSpec{BaggedTreesParams{30, 12, FeatureRule::sqrt, 5}})
    ->Arg(5000)
    ->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrainBase, boosted, LearnerSpec{BoostedTreesParams{60, 0.1, 3, 5}})
    ->Arg(5000)
    ->Unit(benchmark::kMillisecond);

void BM_KnnPredict(benchmark::State& state)
{
    const auto d = make_data(5000);
    const auto m = train_base(KnnParams{10}, d.X, d.y, 9);
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(m->predict(d.X.row(i++ % d.X.rows())));
    }
}
BENCHMARK(BM_KnnPredict);

void BM_FitStack(benchmark::State& state)
{
    const auto d = make_data(5000);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> e(0.0, 20.0);
    std::vector<std::vector<double>> oof(3, d.y);
    for (auto& c : oof) {
        for (auto& v : c) {
            v += e(rng);
        }
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_stack(oof, d.y));
    }
}
BENCHMARK(BM_FitStack);

} // namespace
