#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "sardist/inference.hpp"
#include "sardist/model.hpp"
#include "sardist/preprocess.hpp"
#include "sardist/synthgen.hpp"

using namespace sardist;

namespace {

class ConstantStub final : public Forecaster {
 public:
  std::size_t window_size() const override { return 16; }
  DistributionEstimate forecast(const TensorD& w) const override {
    return {TensorD({w.dim(1), 16, 16}, 1.0), TensorD({w.dim(1), 16, 16}, 1.0)};
  }
};

SynthConfig scene(std::size_t edge, std::size_t steps) {
  SynthConfig cfg;
  cfg.height = cfg.width = edge;
  cfg.num_steps = steps;
  cfg.seed = 5;
  return cfg;
}

void BM_Generate(benchmark::State& state) {
  const SynthConfig cfg = scene(static_cast<std::size_t>(state.range(0)), 12);
  for (auto _ : state) benchmark::DoNotOptimize(generate(cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0) * 12);
}
BENCHMARK(BM_Generate)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_TvDenoise(benchmark::State& state) {
  const auto edge = static_cast<std::size_t>(state.range(0));
  const RasterStack stack = generate(scene(edge, 3)).stack;
  std::vector<double> f(edge * edge);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = 10.0 * std::log10(static_cast<double>(stack.data()[i]));
  const PreprocessConfig prep;
  for (auto _ : state) benchmark::DoNotOptimize(tv_denoise(f, edge, edge, prep.tv_weight, prep.tv_iters));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_TvDenoise)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_PrepareSeries(benchmark::State& state) {
  const RasterStack stack = generate(scene(128, 12)).stack;
  const auto threads = static_cast<unsigned>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(prepare_series(stack, PreprocessConfig{}, threads));
}
BENCHMARK(BM_PrepareSeries)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_SweepStub(benchmark::State& state) {
  const ConstantStub stub;
  const TensorD series({10, 2, 128, 128}, 0.0);
  const auto stride = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sweep_estimate(stub, series, {stride, 64, 1}));
}
BENCHMARK(BM_SweepStub)->Arg(1)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_SweepModel(benchmark::State& state) {
  const Model m = Model::initialized(ModelConfig::transformer_preset(512, 2), 1);
  const TensorD series = prepare_series(generate(scene(64, 10)).stack, PreprocessConfig{});
  const auto stride = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sweep_estimate(m, series, {stride, 64, 1}));
}
BENCHMARK(BM_SweepModel)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace
