#include "sardist/pipeline.hpp"

#include <optional>

#include "sardist/disturbance.hpp"
#include "sardist/parallel.hpp"

namespace sardist {

SynthConfig BenchmarkConfig::default_scene(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.height = cfg.width = 128;
  cfg.num_steps = 12;
  cfg.disturbance_fraction = 0.05;
  cfg.disturbance_delta_db = -6.0;
  cfg.seasonal_amplitude_db = 3.0;
  cfg.seasonal_period_steps = 30.0;
  cfg.seed = seed;
  return cfg;
}

void BenchmarkConfig::validate() const {
  scene.validate();
  prep.validate();
  if (baseline_steps < 2) throw ValidationError("benchmark: need at least 2 baseline frames");
  if (scene.num_steps != baseline_steps + 2) {
    throw ValidationError("benchmark: scene must have baseline_steps + 2 frames (held-out pre and post)");
  }
}

BenchmarkScene prepare_benchmark(const BenchmarkConfig& cfg, unsigned threads) {
  cfg.validate();
  SynthScene synth = generate(cfg.scene);
  RasterStack despeckled = despeckle_tv(clip_open_interval(synth.stack, cfg.prep.clip_epsilon), cfg.prep, threads);
  TensorD series = logit_transform(despeckled);
  return {std::move(synth), std::move(despeckled), std::move(series), cfg.baseline_steps};
}

namespace {

MethodResult finish(std::string name, DisturbanceMap pre, DisturbanceMap post, const Mask& truth) {
  MethodResult r{std::move(name), std::move(pre), std::move(post), {}, {}};
  const LabeledMetricSet set = build_labeled_set(r.pre_metric, r.post_metric, truth);
  r.report = pr_curve(set);
  const auto taus = uniform_thresholds(set);
  r.f1_table = f1_vs_threshold(set, taus);
  return r;
}

}  // namespace

MethodResult evaluate_forecaster(const Forecaster& model, const BenchmarkScene& scene, const SweepConfig& sweep,
                                 const std::string& name) {
  const std::size_t b = scene.baseline_steps;
  const DistributionEstimate est = sweep_estimate(model, frames_of(scene.series, 0, b), sweep);
  return finish(name, mahalanobis_metric(est, frame_of(scene.series, b)),
                mahalanobis_metric(est, frame_of(scene.series, b + 1)), scene.synth.truth);
}

MethodResult evaluate_log_ratio(const BenchmarkScene& scene) {
  const std::size_t b = scene.baseline_steps;
  const RasterStack baseline = scene.despeckled.frames(0, b);
  const TensorD reference = temporal_lower_median(tensor_cast<double>(baseline.data()));
  return finish("log_ratio", log_ratio_metric(reference, tensor_cast<double>(scene.despeckled.frame(b))),
                log_ratio_metric(reference, tensor_cast<double>(scene.despeckled.frame(b + 1))), scene.synth.truth);
}

std::vector<RasterStack> synth_corpus(const SynthConfig& cfg, std::size_t count, std::size_t window,
                                      unsigned threads) {
  if (count < 1) throw ValidationError("corpus: count must be ≥ 1");
  std::vector<std::optional<RasterStack>> slots(count);
  parallel_for(count, threads, [&](std::size_t i) { slots[i] = generate(corpus_sequence_config(cfg, i, window)).stack; });
  std::vector<RasterStack> stacks;
  stacks.reserve(count);
  for (auto& s : slots) stacks.push_back(std::move(*s));
  return stacks;
}

TrainConfig EndToEndConfig::default_train() {
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 4;
  cfg.lr_initial = 1e-3;
  cfg.lr_after_decay = 1e-4;
  cfg.decay_epoch = 4;
  cfg.seed = 11;
  return cfg;
}

SynthConfig EndToEndConfig::default_corpus(std::uint64_t seed) {
  SynthConfig cfg = BenchmarkConfig::default_scene(seed);
  cfg.num_steps = 11;
  cfg.disturbance_fraction = 0.0;
  return cfg;
}

EndToEndResult run_end_to_end(const EndToEndConfig& cfg, unsigned threads, const EpochCallback& on_epoch) {
  cfg.bench.validate();
  const TrainingCorpus corpus =
      make_corpus(synth_corpus(cfg.corpus, cfg.corpus_size, cfg.model.input_size, threads), cfg.bench.prep, threads);
  TrainConfig train_cfg = cfg.train;
  train_cfg.threads = threads;
  EndToEndResult out{train(cfg.model, train_cfg, corpus, on_epoch), {}, {}};
  const BenchmarkScene scene = prepare_benchmark(cfg.bench, threads);
  SweepConfig sweep = cfg.bench.sweep;
  sweep.threads = threads;
  out.model = evaluate_forecaster(out.trained.model, scene, sweep, to_string(cfg.model.kind));
  out.log_ratio = evaluate_log_ratio(scene);
  return out;
}

const char* to_string(AblationGrid grid) {
  switch (grid) {
    case AblationGrid::input_patch: return "input_patch";
    case AblationGrid::model_size: return "model_size";
    case AblationGrid::learning_rate: return "learning_rate";
  }
  return "?";
}

AblationGrid ablation_grid_from_string(const std::string& name) {
  for (auto g : {AblationGrid::input_patch, AblationGrid::model_size, AblationGrid::learning_rate})
    if (name == to_string(g)) return g;
  throw ValidationError("unknown ablation grid '" + name + "' (input_patch, model_size, learning_rate)");
}

std::vector<AblationPreset> ablation_presets(AblationGrid grid) {
  std::vector<AblationPreset> out;
  switch (grid) {
    case AblationGrid::input_patch:
      for (auto [input, patch] : {std::pair<std::size_t, std::size_t>{16, 8}, {32, 8}, {32, 16}}) {
        ModelConfig m = ModelConfig::transformer_default();
        m.input_size = input;
        m.patch_size = patch;
        out.push_back({"I" + std::to_string(input) + "_P" + std::to_string(patch), m, 1e-4});
      }
      break;
    case AblationGrid::model_size:
      for (auto [ff, layers] : {std::pair<std::size_t, std::size_t>{512, 2}, {768, 4}, {1024, 8}}) {
        out.push_back({"FF" + std::to_string(ff) + "_L" + std::to_string(layers),
                       ModelConfig::transformer_preset(ff, layers), ff == 1024 ? 1e-5 : 1e-4});
      }
      break;
    case AblationGrid::learning_rate:
      for (auto [label, lr] : {std::pair<const char*, double>{"lr1e-4", 1e-4}, {"lr1e-5", 1e-5}, {"lr1e-6", 1e-6}})
        out.push_back({label, ModelConfig::transformer_default(), lr});
      break;
  }
  return out;
}

}  // namespace sardist
