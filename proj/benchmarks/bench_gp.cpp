#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "hsde/oracle.hpp"

using namespace hsde;

namespace {

void BM_GpExact(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<double> t(n), y(n);
  for (int i = 0; i < n; ++i) {
    t[i] = 0.5 * i;
    y[i] = std::sin(0.05 * t[i]);
  }
  const GpModel model{20.0, 1.0, 0.1};
  for (auto _ : state) benchmark::DoNotOptimize(gp_fit_predict(model, t, y, t, false));
  state.SetComplexityN(n);
}
BENCHMARK(BM_GpExact)->RangeMultiplier(2)->Range(250, 2000)->Complexity(benchmark::oNCubed)->Unit(benchmark::kMillisecond);

void BM_GpLogMarginal(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<double> t(n), y(n);
  for (int i = 0; i < n; ++i) {
    t[i] = 0.5 * i;
    y[i] = std::cos(0.02 * t[i]);
  }
  const GpModel model{20.0, 1.0, 0.1};
  for (auto _ : state) benchmark::DoNotOptimize(gp_log_marginal(model, t, y));
}
BENCHMARK(BM_GpLogMarginal)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace
