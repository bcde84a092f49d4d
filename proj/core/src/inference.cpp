#include "sardist/inference.hpp"

#include <algorithm>

#include "sardist/disturbance.hpp"
#include "sardist/parallel.hpp"

namespace sardist {

void SweepConfig::validate(std::size_t window) const {
  if (stride < 1 || stride > window) throw ValidationError("sweep: stride must lie in [1, window]");
  if (batch < 1) throw ValidationError("sweep: batch must be ≥ 1");
}

std::vector<std::size_t> window_starts(std::size_t extent, std::size_t window, std::size_t stride) {
  if (extent < window) throw ContractError("sweep: image extent " + std::to_string(extent) + " smaller than window " +
                                           std::to_string(window));
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + window <= extent; s += stride) starts.push_back(s);
  if (starts.back() + window < extent) starts.push_back(extent - window);
  return starts;
}

Tensor<std::uint32_t> coverage_count(std::size_t H, std::size_t W, std::size_t window, std::size_t stride) {
  Tensor<std::uint32_t> count({H, W}, 0);
  for (std::size_t r0 : window_starts(H, window, stride))
    for (std::size_t c0 : window_starts(W, window, stride))
      for (std::size_t i = 0; i < window; ++i)
        for (std::size_t j = 0; j < window; ++j) ++count(r0 + i, c0 + j);
  return count;
}

TensorD frame_of(const TensorD& series, std::size_t t) {
  if (series.rank() != 4 || t >= series.dim(0)) throw BoundsError("frame_of: index out of bounds");
  const std::size_t per = series.stride(0);
  return TensorD({series.dim(1), series.dim(2), series.dim(3)},
                 std::vector<double>(series.data() + t * per, series.data() + (t + 1) * per));
}

TensorD frames_of(const TensorD& series, std::size_t first, std::size_t last) {
  if (series.rank() != 4 || first >= last || last > series.dim(0)) throw BoundsError("frames_of: range out of bounds");
  const std::size_t per = series.stride(0);
  return TensorD({last - first, series.dim(1), series.dim(2), series.dim(3)},
                 std::vector<double>(series.data() + first * per, series.data() + last * per));
}

DistributionEstimate sweep_estimate(const Forecaster& model, const TensorD& series, const SweepConfig& cfg) {
  const std::size_t S = model.window_size();
  cfg.validate(S);
  if (series.rank() != 4) throw ShapeError("sweep: series must be T×C×H×W");
  const std::size_t T = series.dim(0), C = series.dim(1), H = series.dim(2), W = series.dim(3);
  if (H < S || W < S) throw ContractError("sweep: image smaller than model window");

  std::vector<std::pair<std::size_t, std::size_t>> origins;
  for (std::size_t r0 : window_starts(H, S, cfg.stride))
    for (std::size_t c0 : window_starts(W, S, cfg.stride)) origins.emplace_back(r0, c0);

  DistributionEstimate sum{TensorD({C, H, W}, 0.0), TensorD({C, H, W}, 0.0)};
  Tensor<std::uint32_t> count({H, W}, 0);
  std::vector<DistributionEstimate> slots;
  for (std::size_t begin = 0; begin < origins.size(); begin += cfg.batch) {
    const std::size_t n = std::min(cfg.batch, origins.size() - begin);
    slots.assign(n, {});
    parallel_for(n, cfg.threads, [&](std::size_t k) {
      const auto [r0, c0] = origins[begin + k];
      TensorD window({T, C, S, S});
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < S; ++i)
            for (std::size_t j = 0; j < S; ++j) window(t, c, i, j) = series(t, c, r0 + i, c0 + j);
      slots[k] = model.forecast(window);
    });
    for (std::size_t k = 0; k < n; ++k) {
      const auto [r0, c0] = origins[begin + k];
      const DistributionEstimate& est = slots[k];
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < S; ++i)
          for (std::size_t j = 0; j < S; ++j) {
            sum.mu(c, r0 + i, c0 + j) += est.mu(c, i, j);
            sum.sigma(c, r0 + i, c0 + j) += est.sigma(c, i, j);
          }
      for (std::size_t i = 0; i < S; ++i)
        for (std::size_t j = 0; j < S; ++j) ++count(r0 + i, c0 + j);
    }
  }
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const double n = count(i, j);
        sum.mu(c, i, j) /= n;
        sum.sigma(c, i, j) /= n;
      }
  return sum;
}

DisturbanceMap estimate_then_metric(const Forecaster& model, const TensorD& series, const SweepConfig& cfg) {
  if (series.rank() != 4 || series.dim(0) < 3) throw ContractError("estimate_then_metric: need baseline frames plus a post frame");
  const std::size_t T = series.dim(0) - 1;
  const DistributionEstimate est = sweep_estimate(model, frames_of(series, 0, T), cfg);
  return mahalanobis_metric(est, frame_of(series, T));
}

nlohmann::json to_json(const SweepConfig& c) { return {{"stride", c.stride}, {"batch", c.batch}}; }

SweepConfig sweep_config_from_json(const nlohmann::json& j, SweepConfig c) {
  try {
    if (j.contains("stride")) c.stride = j["stride"].get<std::size_t>();
    if (j.contains("batch")) c.batch = j["batch"].get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("sweep config: ") + e.what());
  }
  return c;
}

}  // namespace sardist
