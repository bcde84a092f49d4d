#pragma once

#include <cstddef>
#include <vector>

#include "json.hpp"
#include "sardist/model.hpp"

namespace sardist {

struct SweepConfig {
  std::size_t stride = 4;
  /// Windows forecast per dispatch; does not affect results.
  std::size_t batch = 64;
  unsigned threads = 1;

  void validate(std::size_t window) const;
};

nlohmann::json to_json(const SweepConfig& cfg);
SweepConfig sweep_config_from_json(const nlohmann::json& j, SweepConfig base = {});

/// Window origins along one axis: 0, stride, 2·stride, ... with the last
/// window clamped to end exactly at the edge.
std::vector<std::size_t> window_starts(std::size_t extent, std::size_t window, std::size_t stride);

/// Number of sweep windows covering each pixel, H×W.
Tensor<std::uint32_t> coverage_count(std::size_t height, std::size_t width, std::size_t window, std::size_t stride);

/// Sweeps the forecaster over a T×C×H×W logit series and averages μ and σ
/// arithmetically over every window covering each pixel. Accumulation runs in
/// fixed window order, so results do not depend on threads or batch size.
DistributionEstimate sweep_estimate(const Forecaster& model, const TensorD& series, const SweepConfig& cfg);

/// sweep_estimate on frames 0..T-1 of a (T+1)-frame logit series, then the
/// Mahalanobis metric against frame T.
DisturbanceMap estimate_then_metric(const Forecaster& model, const TensorD& series, const SweepConfig& cfg);

/// Frame t of a T×C×H×W tensor, as C×H×W.
TensorD frame_of(const TensorD& series, std::size_t t);
/// Frames [first, last) of a T×C×H×W tensor.
TensorD frames_of(const TensorD& series, std::size_t first, std::size_t last);

}  // namespace sardist
