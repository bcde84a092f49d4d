#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sardist/raster_store.hpp"

namespace sardist {

enum class ModelKind { transformer, gru };

const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Architecture hyperparameters for both forecasters.
///
/// Transformer: a window T×C×S×S is cut into (S/P)² patches per frame, each
/// embedded to d_model with learned spatial and temporal embeddings, passed
/// through num_layers pre-norm encoder blocks, and the tokens of the latest
/// frame feed two MLP heads (μ and raw σ) of width head_hidden.
///
/// GRU: each frame is flattened to C·S² and run through a num_layers stacked
/// GRU of width d_model; the first layer's input weights perform the C·S² →
/// d_model projection. The final hidden state feeds the same two heads.
struct ModelConfig {
  ModelKind kind = ModelKind::transformer;
  std::size_t channels = 2;
  std::size_t input_size = 16;
  std::size_t patch_size = 8;
  std::size_t d_model = 256;
  std::size_t num_heads = 4;
  std::size_t num_layers = 4;
  std::size_t ff_dim = 768;
  std::size_t head_hidden = 768;
  double dropout = 0.2;
  std::size_t max_T = 10;
  double sigma_floor = 1e-3;

  static ModelConfig transformer_default();
  static ModelConfig gru_default();
  /// Transformer with feed-forward width `ff` (also used for the head width) and `layers` blocks.
  static ModelConfig transformer_preset(std::size_t ff, std::size_t layers);

  void validate() const;

  std::size_t patches_per_side() const { return kind == ModelKind::gru ? 1 : input_size / patch_size; }
  std::size_t num_patches() const { return patches_per_side() * patches_per_side(); }
  /// Edge of the square region one head output covers.
  std::size_t output_patch() const { return kind == ModelKind::gru ? input_size : patch_size; }
  std::size_t patch_values() const { return channels * output_patch() * output_patch(); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
/// Overlays the keys present in `j` onto `base`.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

/// One named tensor inside the flat parameter vector.
struct ParamSpec {
  enum class Init { uniform_fan_in, normal, ones, zeros };

  std::string name;
  std::vector<std::size_t> dims;
  std::size_t offset = 0;
  std::size_t size = 0;
  Init init = Init::zeros;
  std::size_t fan_in = 1;
};

class ParameterLayout {
 public:
  const ParamSpec& add(std::string name, std::vector<std::size_t> dims, ParamSpec::Init init,
                       std::size_t fan_in = 1);
  const ParamSpec& find(const std::string& name) const;
  const std::vector<ParamSpec>& specs() const noexcept { return specs_; }
  std::size_t total() const noexcept { return total_; }

 private:
  std::vector<ParamSpec> specs_;
  std::size_t total_ = 0;
};

ParameterLayout build_layout(const ModelConfig& cfg);

/// Exact number of scalar weights (embeddings, norms, heads included).
std::size_t parameter_count(const ModelConfig& cfg);

/// Fills `params` per the documented initializer: linear weights and biases
/// uniform in ±1/√fan_in, embeddings N(0, 0.02²), norm gains 1, shifts 0.
void initialize_parameters(const ParameterLayout& layout, std::span<double> params, std::uint64_t seed);

enum class Mode { train, eval };

/// Anything that maps a T×C×S×S logit window to a per-pixel Gaussian.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual std::size_t window_size() const = 0;
  /// Eval-mode forecast; must be safe to call concurrently.
  virtual DistributionEstimate forecast(const TensorD& window) const = 0;
};

/// Patch/time bookkeeping for embedded tokens.
struct TokenSequence {
  TensorD tokens;  // N × d_model
  std::vector<std::size_t> patch_row;
  std::vector<std::size_t> patch_col;
  std::vector<std::size_t> time_step;
};

/// Raw patch contents, [T·(S/P)², C·P²], tokens ordered by time then patch row then column.
TensorD extract_patches(const TensorD& window, std::size_t patch);
/// Inverse of extract_patches.
TensorD assemble_patches(const TensorD& patches, std::size_t channels, std::size_t size, std::size_t patch);

/// softmax(Q Kᵀ / √d_k) V for one head, with row-max subtraction.
TensorD attention(const TensorD& q, const TensorD& k, const TensorD& v);

namespace detail {
class Network;
}  // namespace detail

class Model final : public Forecaster {
 public:
  /// All-zero weights; call initialize() or load a checkpoint.
  explicit Model(ModelConfig cfg);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;
  ~Model() override;

  static Model initialized(ModelConfig cfg, std::uint64_t seed);
  void initialize(std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  const ParameterLayout& layout() const noexcept { return layout_; }
  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameter(const std::string& name);
  std::span<const double> parameter(const std::string& name) const;

  std::size_t window_size() const override { return cfg_.input_size; }
  DistributionEstimate forecast(const TensorD& window) const override;

  /// Forward pass. Train mode applies dropout using `rng` (required then).
  DistributionEstimate forward(const TensorD& window, Mode mode, std::mt19937_64* rng = nullptr) const;

  /// Mean Gaussian NLL of `target` (C×S×S) under the forecast of `window`;
  /// adds d(loss)/d(params) into `grad`.
  double loss_and_gradient(const TensorD& window, const TensorD& target, Mode mode,
                           std::mt19937_64* rng, std::span<double> grad) const;

  /// Embedded token sequence for a window (transformer only).
  TokenSequence patchify(const TensorD& window) const;

 private:
  ModelConfig cfg_;
  ParameterLayout layout_;
  AlignedVector<double> params_;
  std::unique_ptr<detail::Network> net_;
};

}  // namespace sardist
