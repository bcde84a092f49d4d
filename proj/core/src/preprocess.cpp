#include "sardist/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "sardist/parallel.hpp"

namespace sardist {

void PreprocessConfig::validate() const {
  if (!(tv_weight > 0.0)) throw ValidationError("preprocess: tv_weight must be > 0");
  if (tv_iters < 1) throw ValidationError("preprocess: tv_iters must be ≥ 1");
  if (!(tv_step > 0.0 && tv_step <= 0.25)) throw ValidationError("preprocess: tv_step must lie in (0, 0.25]");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 0.5)) throw ValidationError("preprocess: clip_epsilon must lie in (0,0.5)");
}

double logit(double x) {
  if (!(x > 0.0 && x < 1.0)) throw DomainError("logit: argument " + std::to_string(x) + " outside (0,1)");
  return std::log(x / (1.0 - x));
}

double inverse_logit(double y) {
  // Split by sign so exp never overflows.
  if (y >= 0.0) return 1.0 / (1.0 + std::exp(-y));
  const double e = std::exp(y);
  return e / (1.0 + e);
}

TensorD logit_transform(const TensorD& values) {
  TensorD out(values.dims());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = logit(values[i]);
  return out;
}

TensorD logit_transform(const RasterStack& stack) {
  return logit_transform(tensor_cast<double>(stack.data()));
}

TensorD inverse_logit(const TensorD& values) {
  TensorD out(values.dims());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = inverse_logit(values[i]);
  return out;
}

RasterStack clip_open_interval(const RasterStack& stack, double eps) {
  if (!(eps > 0.0 && eps < 0.5)) throw ValidationError("clip: eps must lie in (0,0.5)");
  TensorF data = stack.data();
  const float lo = static_cast<float>(eps), hi = static_cast<float>(1.0 - eps);
  for (float& v : data.values()) v = std::clamp(v, lo, hi);
  return RasterStack(std::move(data), stack.timestamps(), stack.pol_names());
}

std::vector<double> tv_denoise(std::span<const double> f, std::size_t H, std::size_t W, double weight,
                               std::size_t iters, double step) {
  const std::size_t n = H * W;
  if (f.size() != n) throw ShapeError("tv_denoise: image size mismatch");
  std::vector<double> px(n, 0.0), py(n, 0.0), div(n, 0.0), w(n);
  auto divergence = [&] {
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t k = i * W + j;
        const double dx = (j + 1 < W ? px[k] : 0.0) - (j > 0 ? px[k - 1] : 0.0);
        const double dy = (i + 1 < H ? py[k] : 0.0) - (i > 0 ? py[k - W] : 0.0);
        div[k] = dx + dy;
      }
    }
  };
  for (std::size_t it = 0; it < iters; ++it) {
    divergence();
    for (std::size_t k = 0; k < n; ++k) w[k] = div[k] - f[k] / weight;
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t k = i * W + j;
        if (j + 1 < W) {
          const double g = w[k + 1] - w[k];
          px[k] = (px[k] + step * g) / (1.0 + step * std::abs(g));
        }
        if (i + 1 < H) {
          const double g = w[k + W] - w[k];
          py[k] = (py[k] + step * g) / (1.0 + step * std::abs(g));
        }
      }
    }
  }
  divergence();
  std::vector<double> u(n);
  for (std::size_t k = 0; k < n; ++k) u[k] = f[k] - weight * div[k];
  return u;
}

double tv_objective(std::span<const double> u, std::span<const double> f, std::size_t H, std::size_t W,
                    double weight) {
  double fidelity = 0.0, tv = 0.0;
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      const std::size_t k = i * W + j;
      fidelity += 0.5 * (u[k] - f[k]) * (u[k] - f[k]);
      if (j + 1 < W) tv += std::abs(u[k + 1] - u[k]);
      if (i + 1 < H) tv += std::abs(u[k + W] - u[k]);
    }
  }
  return fidelity + weight * tv;
}

RasterStack despeckle_tv(const RasterStack& stack, const PreprocessConfig& cfg, unsigned threads) {
  cfg.validate();
  const std::size_t T = stack.steps(), C = stack.channels(), H = stack.height(), W = stack.width();
  const std::size_t plane = H * W;
  TensorF out({T, C, H, W});
  const float lo = static_cast<float>(cfg.clip_epsilon), hi = static_cast<float>(1.0 - cfg.clip_epsilon);
  parallel_for(T * C, threads, [&](std::size_t tc) {
    const float* src = stack.data().data() + tc * plane;
    std::vector<double> db(plane);
    for (std::size_t k = 0; k < plane; ++k) {
      if (!std::isfinite(src[k]) || !(src[k] > 0.0f)) throw DomainError("despeckle: non-finite or nonpositive input");
      db[k] = 10.0 * std::log10(static_cast<double>(src[k]));
    }
    const auto smooth = tv_denoise(db, H, W, cfg.tv_weight, cfg.tv_iters, cfg.tv_step);
    float* dst = out.data() + tc * plane;
    for (std::size_t k = 0; k < plane; ++k) {
      dst[k] = std::clamp(static_cast<float>(std::pow(10.0, smooth[k] / 10.0)), lo, hi);
    }
  });
  return RasterStack(std::move(out), stack.timestamps(), stack.pol_names());
}

TensorD prepare_series(const RasterStack& stack, const PreprocessConfig& cfg, unsigned threads) {
  return logit_transform(despeckle_tv(clip_open_interval(stack, cfg.clip_epsilon), cfg, threads));
}

nlohmann::json to_json(const PreprocessConfig& c) {
  return {{"tv_weight", c.tv_weight}, {"tv_iters", c.tv_iters}, {"tv_step", c.tv_step}, {"clip_epsilon", c.clip_epsilon}};
}

PreprocessConfig preprocess_config_from_json(const nlohmann::json& j, PreprocessConfig c) {
  try {
    if (j.contains("tv_weight")) c.tv_weight = j["tv_weight"].get<double>();
    if (j.contains("tv_iters")) c.tv_iters = j["tv_iters"].get<std::size_t>();
    if (j.contains("tv_step")) c.tv_step = j["tv_step"].get<double>();
    if (j.contains("clip_epsilon")) c.clip_epsilon = j["clip_epsilon"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("preprocess config: ") + e.what());
  }
  return c;
}

}  // namespace sardist
