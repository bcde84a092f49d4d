#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"
#include "sardist/raster_store.hpp"

namespace sardist {

struct PreprocessConfig {
  /// TV regularization weight λ, in dB (the denoiser runs on 10·log10 γ⁰).
  double tv_weight = 1.5;
  std::size_t tv_iters = 50;
  /// Dual step of the projection scheme.
  double tv_step = 0.25;
  double clip_epsilon = 1e-4;

  void validate() const;
};

nlohmann::json to_json(const PreprocessConfig& cfg);
PreprocessConfig preprocess_config_from_json(const nlohmann::json& j, PreprocessConfig base = {});

/// Natural-log logit, log(x / (1 - x)). Throws DomainError outside (0, 1).
double logit(double x);
double inverse_logit(double y);

TensorD logit_transform(const RasterStack& stack);
TensorD logit_transform(const TensorD& values);
TensorD inverse_logit(const TensorD& values);

/// Clamps every value to [eps, 1 - eps].
RasterStack clip_open_interval(const RasterStack& stack, double eps);

/// Anisotropic ROF denoising of one H×W plane by Chambolle's dual projection:
/// argmin_u ½‖u − f‖² + λ·TV(u) with Neumann (mirror) boundaries.
std::vector<double> tv_denoise(std::span<const double> image, std::size_t height, std::size_t width,
                               double weight, std::size_t iters, double step = 0.25);

/// ½‖u − f‖² + λ·TV(u) for the anisotropic TV used by tv_denoise.
double tv_objective(std::span<const double> u, std::span<const double> f, std::size_t height,
                    std::size_t width, double weight);

/// Homomorphic despeckling: TV-denoise each frame and polarization in dB,
/// return to linear γ⁰ and re-clip.
RasterStack despeckle_tv(const RasterStack& stack, const PreprocessConfig& cfg, unsigned threads = 1);

/// clip → despeckle → logit: the model-domain representation of a stack.
TensorD prepare_series(const RasterStack& stack, const PreprocessConfig& cfg, unsigned threads = 1);

}  // namespace sardist
