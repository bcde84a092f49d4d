#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sardist/evaluation.hpp"
#include "sardist/inference.hpp"
#include "sardist/model.hpp"
#include "sardist/preprocess.hpp"
#include "sardist/synthgen.hpp"
#include "sardist/training.hpp"

namespace sardist {

/// A disturbance scene evaluated with the two-image protocol: frames
/// [0, baseline_steps) are the baseline, the next frame is the held-out
/// pre-event image and the last frame is the post-event image. The default
/// scene carries a 3 dB seasonal cycle, so the held-out pre-event frame
/// departs from the baseline median without any disturbance.
struct BenchmarkConfig {
  SynthConfig scene = default_scene();
  std::size_t baseline_steps = 10;
  PreprocessConfig prep;
  SweepConfig sweep;

  static SynthConfig default_scene(std::uint64_t seed = 20240601);
  void validate() const;
};

struct BenchmarkScene {
  SynthScene synth;
  /// Despeckled γ⁰, all frames.
  RasterStack despeckled;
  /// Logit of the despeckled stack, T×C×H×W.
  TensorD series;
  std::size_t baseline_steps = 0;
};

BenchmarkScene prepare_benchmark(const BenchmarkConfig& cfg, unsigned threads = 1);

struct MethodResult {
  std::string method;
  DisturbanceMap pre_metric;
  DisturbanceMap post_metric;
  EvalReport report;
  std::vector<F1Row> f1_table;
};

MethodResult evaluate_forecaster(const Forecaster& model, const BenchmarkScene& scene, const SweepConfig& sweep,
                                 const std::string& name = "transformer");
/// Log-ratio against the lower median of the despeckled baseline frames.
MethodResult evaluate_log_ratio(const BenchmarkScene& scene);

/// In-memory counterpart of generate_training_corpus: the same sequences.
std::vector<RasterStack> synth_corpus(const SynthConfig& cfg, std::size_t count, std::size_t window,
                                      unsigned threads = 1);

/// Desk-scale end-to-end run: synthetic corpus, training, sweep inference and
/// evaluation against the log-ratio baseline on the benchmark scene.
struct EndToEndConfig {
  ModelConfig model = ModelConfig::transformer_preset(512, 2);
  TrainConfig train = default_train();
  SynthConfig corpus = default_corpus();
  std::size_t corpus_size = 512;
  BenchmarkConfig bench;

  static TrainConfig default_train();
  static SynthConfig default_corpus(std::uint64_t seed = 7);
};

struct EndToEndResult {
  TrainResult trained;
  MethodResult model;
  MethodResult log_ratio;
};

EndToEndResult run_end_to_end(const EndToEndConfig& cfg, unsigned threads = 1, const EpochCallback& on_epoch = {});

enum class AblationGrid { input_patch, model_size, learning_rate };

const char* to_string(AblationGrid grid);
AblationGrid ablation_grid_from_string(const std::string& name);

struct AblationPreset {
  std::string label;
  ModelConfig model;
  double lr_initial = 1e-4;
};

/// Input/patch sizes {(16,8), (32,8), (32,16)}; feed-forward width and depth
/// {(512,2), (768,4), (1024,8)} with the largest started at 1e-5; starting
/// learning rates {1e-4, 1e-5, 1e-6}.
std::vector<AblationPreset> ablation_presets(AblationGrid grid);

}  // namespace sardist
