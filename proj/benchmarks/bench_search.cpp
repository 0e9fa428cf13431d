#include <benchmark/benchmark.h>

#include "blocksurgeon/rng.hpp"
#include "blocksurgeon/search.hpp"

namespace {

using namespace blocksurgeon;

void BM_GpFit(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(1);
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  for (int i = 0; i < n; ++i) {
    xs.push_back({rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()});
    ys.push_back(std::sin(3.0 * xs.back()[0]) + xs.back()[1]);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(GpModel::fit(xs, ys));
  }
}
BENCHMARK(BM_GpFit)->Arg(30)->Arg(60)->Arg(120);

void BM_GpPredict(benchmark::State& state) {
  Rng rng(2);
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  for (int i = 0; i < 120; ++i) {
    xs.push_back({rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()});
    ys.push_back(xs.back()[0] - xs.back()[2]);
  }
  const GpModel m = GpModel::fit(xs, ys);
  const std::vector<double> q{0.3, 0.7, 0.1, 0.9};
  for (auto _ : state) {
    benchmark::DoNotOptimize(m.predict(q));
  }
}
BENCHMARK(BM_GpPredict);

void BM_Ehvi(benchmark::State& state) {
  const int front_size = static_cast<int>(state.range(0));
  Rng rng(3);
  std::vector<std::pair<double, double>> front;
  for (int i = 0; i < front_size; ++i) {
    const double t = (i + 0.5) / front_size;
    front.emplace_back(t, 1.0 - t);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        ehvi_gaussian(rng.uniform(), 0.1, rng.uniform(), 0.1, front, {1.5, 1.5}));
  }
}
BENCHMARK(BM_Ehvi)->Arg(8)->Arg(32);

void BM_Hypervolume(benchmark::State& state) {
  const int front_size = static_cast<int>(state.range(0));
  std::vector<std::pair<double, double>> front;
  for (int i = 0; i < front_size; ++i) {
    const double t = (i + 0.5) / front_size;
    front.emplace_back(t, 1.0 - t);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(hypervolume_2d(front, {1.5, 1.5}));
  }
}
BENCHMARK(BM_Hypervolume)->Arg(8)->Arg(64);

void BM_MoboSyntheticRun(benchmark::State& state) {
  const Evaluator eval = [](const std::vector<int>& kinds) {
    EvalPoint p;
    for (std::size_t d = 0; d < kinds.size(); ++d) {
      p.f1 += std::abs(std::sin(1.7 * (double)(d + 1) * (kinds[d] + 1)));
      p.latency_ms += 5.0 + 3.0 * (6 - kinds[d]);
    }
    return p;
  };
  const ScaleFactory factory = [](const std::vector<EvalPoint>&) -> PenaltyFn {
    return [](double ms) { return ms; };
  };
  for (auto _ : state) {
    MoboOptions opts;
    opts.budget = 40;
    opts.seed = 9;
    benchmark::DoNotOptimize(mobo_run(4, 7, eval, factory, opts));
  }
}
BENCHMARK(BM_MoboSyntheticRun)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
