#pragma once

#include "sardist/raster_store.hpp"

namespace sardist {

enum class Combine { max };

struct MetricConfig {
  Combine combine = Combine::max;
  double tau = 3.0;

  void validate() const;
};

/// d = max_p |x_p − μ_p| / σ_p, in standard deviations. `post_image` is C×H×W
/// in logit space.
DisturbanceMap mahalanobis_metric(const DistributionEstimate& est, const TensorD& post_image);

/// Per-pixel lower median over time of a T×C×H×W tensor, returned as C×H×W.
/// For even T this is the (T/2)-th smallest value (1-based).
TensorD temporal_lower_median(const TensorD& series);

/// ℓ = max_p |log10(post_p) − log10(I0_p)| with I0 the per-pixel lower median
/// of the pre-event frames. Units are the raw log10 ratio (10·ℓ is dB).
DisturbanceMap log_ratio_metric(const RasterStack& pre_stack, const TensorD& post_image);
/// Same metric against an explicit C×H×W reference image.
DisturbanceMap log_ratio_metric(const TensorD& reference, const TensorD& post_image);

/// mask = metric > tau (strict).
BinaryDelineation threshold_delineate(const DisturbanceMap& metric, double tau);

}  // namespace sardist
