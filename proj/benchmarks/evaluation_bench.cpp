#include <benchmark/benchmark.h>

#include <random>

#include "sardist/disturbance.hpp"
#include "sardist/evaluation.hpp"
#include "sardist/raster_store.hpp"

using namespace sardist;

namespace {

LabeledMetricSet random_set(std::size_t n) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LabeledMetricSet set;
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = u(rng) < 0.05;
    set.labels.push_back(pos);
    set.scores.push_back(u(rng) * 6.0 + (pos ? 2.0 : 0.0));
  }
  return set;
}

void BM_PrCurve(benchmark::State& state) {
  const LabeledMetricSet set = random_set(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(pr_curve(set));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_PrCurve)->RangeMultiplier(4)->Range(1 << 10, 1 << 16)->Complexity(benchmark::oNLogN);

void BM_F1Sweep(benchmark::State& state) {
  const LabeledMetricSet set = random_set(1 << 15);
  const std::vector<double> taus = uniform_thresholds(set, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(f1_vs_threshold(set, taus));
}
BENCHMARK(BM_F1Sweep)->Arg(101)->Arg(1001);

void BM_Mahalanobis(benchmark::State& state) {
  const auto edge = static_cast<std::size_t>(state.range(0));
  const DistributionEstimate est{TensorD({2, edge, edge}, 0.2), TensorD({2, edge, edge}, 0.7)};
  const TensorD post({2, edge, edge}, 1.1);
  for (auto _ : state) benchmark::DoNotOptimize(mahalanobis_metric(est, post));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_Mahalanobis)->Arg(128)->Arg(512);

void BM_RtsRoundTrip(benchmark::State& state) {
  const auto edge = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0.01f, 0.99f);
  TensorF data({12, 2, edge, edge});
  for (float& v : data.values()) v = u(rng);
  const RtsContainer c{data, revisit_timestamps(12), {"VV", "VH"}, {}};
  for (auto _ : state) benchmark::DoNotOptimize(decode_rts(encode_rts(c)));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(data.size() * sizeof(float)));
}
BENCHMARK(BM_RtsRoundTrip)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace
