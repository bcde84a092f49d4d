#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sardist/model.hpp"
#include "sardist/preprocess.hpp"
#include "sardist/synthgen.hpp"

namespace sardist {

/// Mean over all channels and pixels of ½·log(2πσ²) + (x − μ)²/(2σ²).
/// Throws DomainError if any σ ≤ 0.
double nll_loss(const DistributionEstimate& est, const TensorD& target);

/// nll_loss plus its gradient with respect to μ and σ.
double nll_loss_gradient(const DistributionEstimate& est, const TensorD& target, TensorD& dmu, TensorD& dsigma);

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t epochs = 50;
  double lr_initial = 1e-4;
  double lr_after_decay = 1e-5;
  /// Last epoch (1-based) trained at lr_initial.
  std::size_t decay_epoch = 25;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t T_min = 2;
  std::size_t T_max = 10;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate(const ModelConfig& model) const;
  double learning_rate(std::size_t epoch) const { return epoch <= decay_epoch ? lr_initial : lr_after_decay; }
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Despeckled, logit-space sequences, each steps×C×S×S.
struct TrainingCorpus {
  std::vector<TensorD> sequences;
  std::vector<std::string> sources;
};

TrainingCorpus load_corpus(const std::filesystem::path& manifest_path, const PreprocessConfig& prep,
                           unsigned threads = 1);
TrainingCorpus make_corpus(const std::vector<RasterStack>& stacks, const PreprocessConfig& prep,
                           unsigned threads = 1);

/// Where one training example comes from.
struct SampleRef {
  std::size_t sequence = 0;
  std::size_t steps = 0;  // T: frames 1..T are input
  std::size_t target_frame = 0;  // 0-based index of frame T+1
  std::size_t row0 = 0;
  std::size_t col0 = 0;
};

struct BatchPlan {
  std::size_t steps = 0;
  std::vector<SampleRef> samples;
};

/// One epoch of batches: sequences are drawn as a seeded permutation of the
/// corpus, T is drawn uniformly from [T_min, T_max] per batch, and a window
/// of `window` pixels is cropped at a random offset when the corpus is larger.
std::vector<BatchPlan> plan_epoch(const TrainingCorpus& corpus, const TrainConfig& cfg, std::size_t window,
                                  std::mt19937_64& rng);

struct Batch {
  std::vector<TensorD> windows;  // T×C×S×S
  std::vector<TensorD> targets;  // C×S×S
  std::vector<SampleRef> provenance;
};

Batch materialize(const TrainingCorpus& corpus, const BatchPlan& plan, std::size_t window);

/// Draws the next batch from a fresh epoch plan; convenience for tests and tools.
Batch sample_batch(const TrainingCorpus& corpus, std::mt19937_64& rng, const TrainConfig& cfg, std::size_t window);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update in place. Throws NumericError and leaves both
/// the parameters and the state untouched when any gradient is non-finite.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamHyper& hyper);

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_nll = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> curve;
  bool diverged = false;
  std::string message;
};

/// Called after each epoch; return false to stop early.
using EpochCallback = std::function<bool(const EpochRecord&)>;

/// Self-supervised training on the corpus with the epoch learning-rate
/// schedule. On a non-finite loss or gradient, stops and returns the last
/// good weights with diverged = true.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const TrainingCorpus& corpus,
                  const EpochCallback& on_epoch = {});

void write_loss_curve(const std::vector<EpochRecord>& curve, const std::filesystem::path& path);

/// Scalar objective of a flat parameter vector, for gradient checking.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual double loss(std::span<const double> params) const = 0;
  /// Returns the loss and overwrites `grad`.
  virtual double loss_and_gradient(std::span<const double> params, std::span<double> grad) const = 0;
};

/// Eval-mode NLL of one (window, target) pair as a function of model weights.
class ModelObjective final : public Objective {
 public:
  ModelObjective(ModelConfig cfg, TensorD window, TensorD target);
  double loss(std::span<const double> params) const override;
  double loss_and_gradient(std::span<const double> params, std::span<double> grad) const override;

 private:
  mutable Model model_;
  TensorD window_;
  TensorD target_;
};

struct GradientCheckOptions {
  std::size_t num_probes = 50;
  double step = 1e-5;
  std::uint64_t seed = 0;
  /// Indices probed in addition to the random ones.
  std::vector<std::size_t> forced;
};

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::vector<std::size_t> probed;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

/// Central differences of the objective against its analytic gradient on
/// randomly selected coordinates; relative error is
/// |g_fd − g| / max(|g_fd|, |g|, 1e-8).
GradientCheckReport gradient_check(const Objective& objective, std::span<const double> params,
                                   const GradientCheckOptions& options = {});

/// Convenience form for a model: dropout off, float64.
double gradient_check(const ModelConfig& cfg, std::span<const double> params, const TensorD& window,
                      const TensorD& target, std::size_t num_probes, std::uint64_t seed = 0);

}  // namespace sardist
