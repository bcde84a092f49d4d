#pragma once

#include <random>

#include "nn_ops.hpp"
#include "sardist/model.hpp"

namespace sardist::detail {

/// Two-layer MLP head: d_model → hidden (ReLU) → patch values.
struct HeadRef {
  nn::LinearRef fc1;
  nn::LinearRef fc2;
};

struct HeadCache {
  nn::Mat input;
  nn::Mat pre;  // fc1 output before ReLU
  nn::Mat act;
};

HeadRef head_ref(const ParameterLayout& layout, const std::string& prefix);
nn::Mat head_forward(const double* p, const HeadRef& h, const nn::Mat& x, HeadCache& cache);
nn::Mat head_backward(const double* p, double* g, const HeadRef& h, const HeadCache& cache, const nn::Mat& dy);

/// Per-sample computation shared by both architectures. The trunk maps a
/// window to one feature row per output patch; heads and the loss are common.
class Network {
 public:
  virtual ~Network() = default;

  /// Runs the forward pass; when `grad` is non-null also runs backward for the
  /// mean NLL against `target` and returns the loss (0 otherwise).
  double run(const double* params, const TensorD& window, Mode mode, std::mt19937_64* rng,
             DistributionEstimate& out, const TensorD* target, double* grad) const;

  struct TrunkState {
    virtual ~TrunkState() = default;
  };

 protected:
  Network(const ModelConfig& cfg, const ParameterLayout& layout);

  /// Features for each output patch, num_patches × d_model.
  virtual nn::Mat trunk_forward(const double* params, const TensorD& window, Mode mode, std::mt19937_64* rng,
                                std::unique_ptr<TrunkState>& state) const = 0;
  virtual void trunk_backward(const double* params, double* grad, const TrunkState& state,
                              const nn::Mat& dfeatures) const = 0;

  ModelConfig cfg_;
  HeadRef mu_head_;
  HeadRef sigma_head_;
};

std::unique_ptr<Network> make_transformer(const ModelConfig& cfg, const ParameterLayout& layout);
std::unique_ptr<Network> make_gru(const ModelConfig& cfg, const ParameterLayout& layout);

void check_window(const ModelConfig& cfg, const TensorD& window);

inline nn::LinearRef linear_ref(const ParameterLayout& layout, const std::string& prefix) {
  const auto& w = layout.find(prefix + ".weight");
  const auto& b = layout.find(prefix + ".bias");
  return {w.offset, b.offset, static_cast<nn::Index>(w.dims[0]), static_cast<nn::Index>(w.dims[1])};
}

inline nn::NormRef norm_ref(const ParameterLayout& layout, const std::string& prefix) {
  const auto& g = layout.find(prefix + ".gain");
  return {g.offset, layout.find(prefix + ".shift").offset, static_cast<nn::Index>(g.dims[0])};
}

}  // namespace sardist::detail
