#include "sardist/disturbance.hpp"

#include <algorithm>
#include <cmath>

namespace sardist {

void MetricConfig::validate() const {
  if (!(tau > 0.0)) throw ValidationError("metric: tau must be > 0");
}

DisturbanceMap mahalanobis_metric(const DistributionEstimate& est, const TensorD& post) {
  if (est.mu.rank() != 3 || est.mu.dims() != post.dims() || est.sigma.dims() != post.dims()) {
    throw ShapeError("mahalanobis_metric: estimate " + shape_string(est.mu.dims()) + " vs post image " +
                     shape_string(post.dims()));
  }
  const std::size_t C = post.dim(0), H = post.dim(1), W = post.dim(2);
  DisturbanceMap out{TensorD({H, W}, 0.0), MetricUnits::standard_deviations};
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        const double s = est.sigma(c, i, j);
        if (!(s > 0.0)) throw DomainError("mahalanobis_metric: sigma must be > 0");
        out.values(i, j) = std::max(out.values(i, j), std::abs(post(c, i, j) - est.mu(c, i, j)) / s);
      }
    }
  }
  return out;
}

TensorD temporal_lower_median(const TensorD& series) {
  if (series.rank() != 4 || series.dim(0) < 1) throw ShapeError("temporal median: expected T×C×H×W");
  const std::size_t T = series.dim(0), plane = series.stride(0);
  TensorD out({series.dim(1), series.dim(2), series.dim(3)});
  std::vector<double> column(T);
  const std::size_t k = (T - 1) / 2;
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t t = 0; t < T; ++t) column[t] = series[t * plane + p];
    std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(k), column.end());
    out[p] = column[k];
  }
  return out;
}

DisturbanceMap log_ratio_metric(const TensorD& reference, const TensorD& post) {
  if (reference.rank() != 3 || reference.dims() != post.dims()) {
    throw ShapeError("log_ratio_metric: reference " + shape_string(reference.dims()) + " vs post " +
                     shape_string(post.dims()));
  }
  const std::size_t C = post.dim(0), H = post.dim(1), W = post.dim(2);
  DisturbanceMap out{TensorD({H, W}, 0.0), MetricUnits::decibels};
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        const double ref = reference(c, i, j), x = post(c, i, j);
        if (!(ref > 0.0) || !(x > 0.0)) throw DomainError("log_ratio_metric: backscatter must be > 0");
        out.values(i, j) = std::max(out.values(i, j), std::abs(std::log10(x) - std::log10(ref)));
      }
    }
  }
  return out;
}

DisturbanceMap log_ratio_metric(const RasterStack& pre_stack, const TensorD& post) {
  return log_ratio_metric(temporal_lower_median(tensor_cast<double>(pre_stack.data())), post);
}

BinaryDelineation threshold_delineate(const DisturbanceMap& metric, double tau) {
  if (!(tau > 0.0)) throw ValidationError("threshold: tau must be > 0");
  BinaryDelineation out{Mask(metric.values.dims(), 0), tau, metric.units};
  for (std::size_t i = 0; i < metric.values.size(); ++i) out.mask[i] = metric.values[i] > tau ? 1 : 0;
  return out;
}

}  // namespace sardist
