#include <benchmark/benchmark.h>

#include "hsde/datagen.hpp"
#include "hsde/smc.hpp"

using namespace hsde;

namespace {

ModelParams scalar_model() {
  return {GaussianObsModel(Matrix::Ones(1, 1), Matrix::Constant(1, 1, 0.1)),
          NoiseParams::uniform(1, 0.1, 0.01),
          WaitingTimeModel::from_moments(10.0, 4.0),
          MarkModel(Vector::Zero(1), Matrix::Identity(1, 1)),
          PriorHyperparams::weak(1),
          InitialPrior::standard(1)};
}

void run(benchmark::State& state, int steps, int particles, PathStorage storage) {
  const ModelParams params = scalar_model();
  Rng rng(stream_seed(7, static_cast<std::uint64_t>(steps)));
  const ModelSample data = sample_model(params, TimeGrid(0.5, steps), rng);
  SmcConfig cfg;
  cfg.particles = particles;
  cfg.storage = storage;
  cfg.compute_bands = false;
  for (auto _ : state) benchmark::DoNotOptimize(run_filter(data.obs, params, cfg));
  state.SetComplexityN(steps);
}

void BM_FilterSteps(benchmark::State& state) {
  run(state, static_cast<int>(state.range(0)), 500, PathStorage::filtered_summary);
}
BENCHMARK(BM_FilterSteps)->RangeMultiplier(2)->Range(250, 4000)->Complexity(benchmark::oN)->Unit(benchmark::kMillisecond);

void BM_FilterParticles(benchmark::State& state) {
  run(state, 1000, static_cast<int>(state.range(0)), PathStorage::filtered_summary);
}
BENCHMARK(BM_FilterParticles)->RangeMultiplier(2)->Range(250, 2000)->Unit(benchmark::kMillisecond);

void BM_FilterFullPaths(benchmark::State& state) {
  run(state, static_cast<int>(state.range(0)), 500, PathStorage::full_path);
}
BENCHMARK(BM_FilterFullPaths)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace
