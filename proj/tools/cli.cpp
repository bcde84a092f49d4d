#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "sardist/checkpoint.hpp"
#include "sardist/disturbance.hpp"
#include "sardist/parallel.hpp"
#include "sardist/pipeline.hpp"
#include "selftest.hpp"

#ifndef SARDIST_VERSION
#define SARDIST_VERSION "0.0.0"
#endif

namespace sardist::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::string manifest_path;
  unsigned threads = 0;
  bool allow_raw = false;
  std::optional<double> tv_weight;
  std::optional<std::size_t> tv_iters;
  std::optional<double> clip_eps;

  json config = json::object();

  json section(const char* name) const { return config.contains(name) ? config[name] : json::object(); }
  unsigned resolved_threads() const { return resolve_threads(threads); }
};

/// The per-run record written next to a command's outputs.
struct RunManifest {
  std::string subcommand;
  json config = json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::optional<std::uint64_t> seed;
  fs::path path;

  void write(const std::string& status, const std::string& message, double seconds, unsigned threads) const {
    json j = {{"tool", "sardist"},
              {"version", SARDIST_VERSION},
              {"subcommand", subcommand},
              {"config", config},
              {"inputs", inputs},
              {"outputs", outputs},
              {"seed", seed ? json(*seed) : json(nullptr)},
              {"threads", threads},
              {"status", status},
              {"message", message},
              {"duration_seconds", seconds}};
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot write run manifest '" + path.string() + "'");
    out << j.dump(2) << '\n';
  }
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot read config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("config '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw ValidationError("config '" + path + "' must hold a JSON object");
  return j;
}

template <typename T>
void overlay(T& field, const std::optional<T>& flag) {
  if (flag) field = *flag;
}

PreprocessConfig resolve_prep(const Globals& g) {
  PreprocessConfig cfg = preprocess_config_from_json(g.section("preprocess"));
  overlay(cfg.tv_weight, g.tv_weight);
  overlay(cfg.tv_iters, g.tv_iters);
  overlay(cfg.clip_epsilon, g.clip_eps);
  cfg.validate();
  return cfg;
}

struct SynthFlags {
  bool benchmark = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> height, width, steps, classes;
  std::optional<double> looks, fraction, delta_db, seasonal_db, seasonal_period;

  void add_to(CLI::App* sub) {
    sub->add_flag("--benchmark", benchmark, "Start from the benchmark scene (seasonal cycle, 12 frames)");
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--height", height, "Rows");
    sub->add_option("--width", width, "Columns");
    sub->add_option("--steps", steps, "Number of frames");
    sub->add_option("--classes", classes, "Land-cover classes");
    sub->add_option("--looks", looks, "Equivalent number of looks");
    sub->add_option("--fraction", fraction, "Disturbed fraction of the scene");
    sub->add_option("--delta-db", delta_db, "Backscatter change inside the disturbance (dB)");
    sub->add_option("--seasonal-db", seasonal_db, "Seasonal amplitude (dB)");
    sub->add_option("--seasonal-period", seasonal_period, "Seasonal period in frames");
  }

  SynthConfig resolve(const Globals& g, SynthConfig base) const {
    SynthConfig cfg = synth_config_from_json(g.section("synth"), std::move(base));
    overlay(cfg.seed, seed);
    overlay(cfg.height, height);
    overlay(cfg.width, width);
    overlay(cfg.num_steps, steps);
    overlay(cfg.num_classes, classes);
    overlay(cfg.looks, looks);
    overlay(cfg.disturbance_fraction, fraction);
    overlay(cfg.disturbance_delta_db, delta_db);
    overlay(cfg.seasonal_amplitude_db, seasonal_db);
    overlay(cfg.seasonal_period_steps, seasonal_period);
    cfg.validate();
    return cfg;
  }
};

ModelConfig model_preset(const std::string& name) {
  if (name == "transformer") return ModelConfig::transformer_default();
  if (name == "gru") return ModelConfig::gru_default();
  if (name == "ff512-l2") return ModelConfig::transformer_preset(512, 2);
  if (name == "ff768-l4") return ModelConfig::transformer_preset(768, 4);
  if (name == "ff1024-l8") return ModelConfig::transformer_preset(1024, 8);
  throw ValidationError("unknown preset '" + name + "' (transformer, gru, ff512-l2, ff768-l4, ff1024-l8)");
}

/// Reads the chosen frame of a stack and brings it into logit space.
TensorD logit_frame(const RasterStack& stack, std::optional<std::size_t> frame, const PreprocessConfig& prep) {
  const std::size_t t = frame.value_or(stack.steps() - 1);
  if (t >= stack.steps()) throw BoundsError("frame " + std::to_string(t) + " out of range");
  return frame_of(logit_transform(clip_open_interval(stack, prep.clip_epsilon)), t);
}

RasterStack maybe_despeckle(const RasterStack& stack, bool enabled, const PreprocessConfig& prep, unsigned threads) {
  const RasterStack clipped = clip_open_interval(stack, prep.clip_epsilon);
  return enabled ? despeckle_tv(clipped, prep, threads) : clipped;
}

using Action = std::function<int(RunManifest&)>;

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Self-supervised SAR disturbance mapping", "sardist"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.set_version_flag("--version", SARDIST_VERSION);

  Globals g;
  app.add_option("--config", g.config_path, "JSON file mirroring the typed configs");
  app.add_option("--manifest", g.manifest_path, "Where to write the run manifest");
  app.add_option("--threads", g.threads, "Worker threads (default: $SARDIST_THREADS or all cores)");
  app.add_flag("--allow-raw", g.allow_raw, "Accept inputs outside (0,1) and clip them");
  app.add_option("--tv-weight", g.tv_weight, "Despeckling TV weight (dB)");
  app.add_option("--tv-iters", g.tv_iters, "Despeckling iterations");
  app.add_option("--clip-eps", g.clip_eps, "Clip inputs to [eps, 1-eps]");

  Action action;
  const auto select = [&](CLI::App* sub, Action a) { sub->callback([&action, a = std::move(a)] { action = a; }); };
  const auto read_options = [&g] { return RtsReadOptions{g.allow_raw}; };

  // synth
  SynthFlags synth_flags;
  std::string synth_out, synth_mask;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene and its truth mask");
  synth->add_option("--out", synth_out, "Output stack (.rts)")->required();
  synth->add_option("--mask", synth_mask, "Output truth mask (.rts)");
  synth_flags.add_to(synth);
  select(synth, [&](RunManifest& run) {
    run.path = synth_out + ".run.json";
    const SynthConfig cfg = synth_flags.resolve(g, synth_flags.benchmark ? BenchmarkConfig::default_scene() : SynthConfig{});
    run.config = {{"synth", to_json(cfg)}};
    run.seed = cfg.seed;
    const SynthScene scene = generate(cfg);
    write_rts(scene.stack, synth_out);
    run.outputs.push_back(synth_out);
    if (!synth_mask.empty()) {
      write_mask(scene.truth, synth_mask);
      run.outputs.push_back(synth_mask);
    }
    std::printf("wrote %zux%zux%zux%zu stack to %s\n", scene.stack.steps(), scene.stack.channels(), scene.stack.height(),
                scene.stack.width(), synth_out.c_str());
    return 0;
  });

  // corpus
  SynthFlags corpus_flags;
  std::string corpus_dir;
  std::size_t corpus_count = 512, corpus_window = 16;
  auto* corpus = app.add_subcommand("corpus", "Generate an undisturbed training corpus with a manifest");
  corpus->add_option("--out-dir", corpus_dir, "Output directory")->required();
  corpus->add_option("--count", corpus_count, "Number of sequences")->capture_default_str();
  corpus->add_option("--window", corpus_window, "Sequence edge in pixels")->capture_default_str();
  corpus_flags.add_to(corpus);
  select(corpus, [&](RunManifest& run) {
    run.path = fs::path(corpus_dir) / "run.json";
    SynthConfig base = corpus_flags.benchmark ? EndToEndConfig::default_corpus() : SynthConfig{};
    base.disturbance_fraction = 0.0;
    const SynthConfig cfg = corpus_flags.resolve(g, base);
    run.config = {{"synth", to_json(cfg)}, {"count", corpus_count}, {"window", corpus_window}};
    run.seed = cfg.seed;
    fs::create_directories(corpus_dir);
    generate_training_corpus(cfg, corpus_count, corpus_dir, corpus_window, g.resolved_threads());
    run.outputs.push_back((fs::path(corpus_dir) / "manifest.json").string());
    std::printf("wrote %zu sequences to %s\n", corpus_count, corpus_dir.c_str());
    return 0;
  });

  // despeckle
  std::string desp_in, desp_out;
  auto* despeckle = app.add_subcommand("despeckle", "Clip and TV-despeckle a stack");
  despeckle->add_option("--input", desp_in, "Input stack (.rts)")->required();
  despeckle->add_option("--out", desp_out, "Output stack (.rts)")->required();
  select(despeckle, [&](RunManifest& run) {
    run.path = desp_out + ".run.json";
    const PreprocessConfig prep = resolve_prep(g);
    run.config = {{"preprocess", to_json(prep)}};
    run.inputs.push_back(desp_in);
    const RasterStack in = read_rts(desp_in, read_options());
    write_rts(despeckle_tv(clip_open_interval(in, prep.clip_epsilon), prep, g.resolved_threads()), desp_out);
    run.outputs.push_back(desp_out);
    return 0;
  });

  // train
  std::string train_corpus, train_out, train_preset = "transformer";
  std::optional<std::size_t> epochs, batch_size, decay_epoch, t_min, t_max;
  std::optional<double> lr, lr_decayed, dropout;
  std::optional<std::uint64_t> train_seed;
  auto* trainc = app.add_subcommand("train", "Train a forecaster on a corpus");
  trainc->add_option("--corpus", train_corpus, "Corpus manifest.json")->required();
  trainc->add_option("--out-dir", train_out, "Checkpoint directory")->required();
  trainc->add_option("--preset", train_preset, "transformer, gru, ff512-l2, ff768-l4 or ff1024-l8")->capture_default_str();
  trainc->add_option("--epochs", epochs, "Epochs");
  trainc->add_option("--batch-size", batch_size, "Sequences per step");
  trainc->add_option("--lr", lr, "Initial learning rate");
  trainc->add_option("--lr-decayed", lr_decayed, "Learning rate after the decay epoch");
  trainc->add_option("--decay-epoch", decay_epoch, "Last epoch at the initial rate");
  trainc->add_option("--t-min", t_min, "Shortest baseline");
  trainc->add_option("--t-max", t_max, "Longest baseline");
  trainc->add_option("--dropout", dropout, "Dropout rate");
  trainc->add_option("--seed", train_seed, "Random seed");
  select(trainc, [&](RunManifest& run) {
    run.path = fs::path(train_out) / "run.json";
    fs::create_directories(train_out);
    const PreprocessConfig prep = resolve_prep(g);
    ModelConfig mcfg = model_config_from_json(g.section("model"), model_preset(train_preset));
    overlay(mcfg.dropout, dropout);
    TrainConfig tcfg = train_config_from_json(g.section("train"));
    overlay(tcfg.epochs, epochs);
    overlay(tcfg.batch_size, batch_size);
    overlay(tcfg.lr_initial, lr);
    overlay(tcfg.lr_after_decay, lr_decayed);
    overlay(tcfg.decay_epoch, decay_epoch);
    overlay(tcfg.T_min, t_min);
    overlay(tcfg.T_max, t_max);
    overlay(tcfg.seed, train_seed);
    tcfg.threads = g.resolved_threads();
    tcfg.validate(mcfg);
    run.config = {{"preprocess", to_json(prep)}, {"model", to_json(mcfg)}, {"train", to_json(tcfg)}};
    run.seed = tcfg.seed;
    run.inputs.push_back(train_corpus);

    const TrainingCorpus data = load_corpus(train_corpus, prep, tcfg.threads);
    const TrainResult result = train(mcfg, tcfg, data, [](const EpochRecord& e) {
      std::printf("epoch %zu  nll %.6f  lr %g\n", e.epoch, e.mean_nll, e.lr);
      std::fflush(stdout);
      return true;
    });
    save_checkpoint(result.model, train_out);
    write_loss_curve(result.curve, fs::path(train_out) / "loss_curve.csv");
    run.outputs.push_back(train_out);
    if (result.diverged) throw NumericError("training diverged: " + result.message + " (last good weights saved)");
    return 0;
  });

  // estimate
  std::string est_ckpt, est_in, est_mu, est_sigma;
  std::optional<std::size_t> est_frames, stride, sweep_batch;
  bool est_despeckle = false;
  auto* estimate = app.add_subcommand("estimate", "Sweep a checkpoint over a baseline stack");
  estimate->add_option("--checkpoint", est_ckpt, "Checkpoint directory")->required();
  estimate->add_option("--input", est_in, "Baseline stack (.rts), despeckled unless --despeckle")->required();
  estimate->add_option("--mu", est_mu, "Output mean (.rts)")->required();
  estimate->add_option("--sigma", est_sigma, "Output standard deviation (.rts)")->required();
  estimate->add_option("--frames", est_frames, "Use only the first N frames");
  estimate->add_option("--stride", stride, "Sweep stride in pixels");
  estimate->add_option("--batch", sweep_batch, "Windows per dispatch");
  estimate->add_flag("--despeckle", est_despeckle, "Despeckle the input first");
  select(estimate, [&](RunManifest& run) {
    run.path = est_mu + ".run.json";
    const PreprocessConfig prep = resolve_prep(g);
    SweepConfig sweep = sweep_config_from_json(g.section("sweep"));
    overlay(sweep.stride, stride);
    overlay(sweep.batch, sweep_batch);
    sweep.threads = g.resolved_threads();
    run.config = {{"preprocess", to_json(prep)}, {"sweep", to_json(sweep)}, {"despeckle", est_despeckle}};
    run.inputs = {est_ckpt, est_in};
    const Model model = load_checkpoint(est_ckpt);
    const RasterStack stack = maybe_despeckle(read_rts(est_in, read_options()), est_despeckle, prep, sweep.threads);
    const TensorD series = logit_transform(stack);
    const std::size_t n = est_frames.value_or(series.dim(0));
    if (n > series.dim(0)) throw BoundsError("--frames exceeds the stack length");
    run.config["frames"] = n;
    const DistributionEstimate est = sweep_estimate(model, frames_of(series, 0, n), sweep);
    write_estimate(est, est_mu, est_sigma);
    run.outputs = {est_mu, est_sigma};
    return 0;
  });

  // metric
  std::string metric_kind = "mahalanobis", metric_mu, metric_sigma, metric_pre, metric_post, metric_out;
  std::optional<std::size_t> post_frame, pre_frames;
  bool metric_despeckle = false;
  auto* metric = app.add_subcommand("metric", "Per-pixel disturbance metric of a post-event frame");
  metric->add_option("--kind", metric_kind, "mahalanobis or logratio")
      ->check(CLI::IsMember({"mahalanobis", "logratio"}))
      ->capture_default_str();
  metric->add_option("--mu", metric_mu, "Mean estimate (mahalanobis)");
  metric->add_option("--sigma", metric_sigma, "Standard deviation estimate (mahalanobis)");
  metric->add_option("--pre", metric_pre, "Pre-event stack (logratio)");
  metric->add_option("--pre-frames", pre_frames, "Use only the first N pre-event frames (logratio)");
  metric->add_option("--post", metric_post, "Stack holding the post-event frame")->required();
  metric->add_option("--post-frame", post_frame, "Frame of --post to score (default: last)");
  metric->add_option("--out", metric_out, "Output metric (.rts)")->required();
  metric->add_flag("--despeckle", metric_despeckle, "Despeckle the stacks first");
  select(metric, [&](RunManifest& run) {
    run.path = metric_out + ".run.json";
    const PreprocessConfig prep = resolve_prep(g);
    const unsigned threads = g.resolved_threads();
    run.config = {{"kind", metric_kind}, {"preprocess", to_json(prep)}, {"despeckle", metric_despeckle}};
    const RasterStack post = maybe_despeckle(read_rts(metric_post, read_options()), metric_despeckle, prep, threads);
    DisturbanceMap out;
    if (metric_kind == "mahalanobis") {
      if (metric_mu.empty() || metric_sigma.empty()) throw ValidationError("mahalanobis needs --mu and --sigma");
      run.inputs = {metric_mu, metric_sigma, metric_post};
      out = mahalanobis_metric(read_estimate(metric_mu, metric_sigma), logit_frame(post, post_frame, prep));
    } else {
      if (metric_pre.empty()) throw ValidationError("logratio needs --pre");
      run.inputs = {metric_pre, metric_post};
      const RasterStack pre = maybe_despeckle(read_rts(metric_pre, read_options()), metric_despeckle, prep, threads);
      const std::size_t n = pre_frames.value_or(pre.steps());
      if (n < 1 || n > pre.steps()) throw BoundsError("--pre-frames out of range");
      const TensorD reference = temporal_lower_median(frames_of(tensor_cast<double>(pre.data()), 0, n));
      const std::size_t t = post_frame.value_or(post.steps() - 1);
      if (t >= post.steps()) throw BoundsError("--post-frame out of range");
      out = log_ratio_metric(reference, tensor_cast<double>(post.frame(t)));
    }
    write_metric(out, metric_out);
    run.outputs.push_back(metric_out);
    return 0;
  });

  // delineate
  std::string del_metric, del_out;
  std::optional<double> del_tau;
  auto* delineate = app.add_subcommand("delineate", "Threshold a metric into a binary map");
  delineate->add_option("--metric", del_metric, "Metric (.rts)")->required();
  delineate->add_option("--tau", del_tau, "Threshold (metric > tau is disturbed)");
  delineate->add_option("--out", del_out, "Output mask (.rts)")->required();
  select(delineate, [&](RunManifest& run) {
    run.path = del_out + ".run.json";
    MetricConfig mc;
    const json section = g.section("metric");
    if (section.contains("tau")) mc.tau = section["tau"].get<double>();
    overlay(mc.tau, del_tau);
    mc.validate();
    run.config = {{"metric", {{"tau", mc.tau}}}};
    run.inputs.push_back(del_metric);
    const BinaryDelineation d = threshold_delineate(read_metric(del_metric), mc.tau);
    write_mask(d.mask, del_out);
    run.outputs.push_back(del_out);
    const auto hits = std::count(d.mask.values().begin(), d.mask.values().end(), std::uint8_t{1});
    std::printf("%td of %zu pixels above tau=%g\n", hits, d.mask.size(), mc.tau);
    return 0;
  });

  // eval
  std::string eval_pre, eval_post, eval_truth, eval_out;
  std::size_t eval_points = 512, eval_thresholds = 101;
  auto* evalc = app.add_subcommand("eval", "Two-image PR evaluation and report");
  evalc->add_option("--pre-metric", eval_pre, "Metric of the held-out pre-event frame")->required();
  evalc->add_option("--post-metric", eval_post, "Metric of the post-event frame")->required();
  evalc->add_option("--truth", eval_truth, "Truth mask (.rts)")->required();
  evalc->add_option("--out-dir", eval_out, "Report directory")->required();
  evalc->add_option("--max-points", eval_points, "PR curve points")->capture_default_str();
  evalc->add_option("--thresholds", eval_thresholds, "F1 sweep thresholds")->capture_default_str();
  select(evalc, [&](RunManifest& run) {
    run.path = fs::path(eval_out) / "run.json";
    fs::create_directories(eval_out);
    run.config = {{"max_points", eval_points}, {"thresholds", eval_thresholds}};
    run.inputs = {eval_pre, eval_post, eval_truth};
    const LabeledMetricSet set = build_labeled_set(read_metric(eval_pre), read_metric(eval_post), read_mask(eval_truth));
    const EvalReport report = pr_curve(set, eval_points);
    emit_report(report, f1_vs_threshold(set, uniform_thresholds(set, eval_thresholds)), eval_out);
    for (const char* f : {"pr_curve.csv", "f1_vs_tau.csv", "pr_curve.svg", "f1_vs_tau.svg", "summary.json"})
      run.outputs.push_back((fs::path(eval_out) / f).string());
    std::printf("pr_auc %.6f  best_f1 %.6f  best_tau %.6g\n", report.pr_auc, report.best_f1, report.best_tau);
    return 0;
  });

  // ablate
  std::string ablate_grid, ablate_out;
  std::size_t ablate_corpus = 128, ablate_epochs = 2, ablate_batch = 4;
  std::uint64_t ablate_seed = 7;
  bool dry_run = false;
  auto* ablate = app.add_subcommand("ablate", "Train and score a preset grid at desk scale");
  ablate->add_option("--grid", ablate_grid, "input_patch, model_size or learning_rate")->required();
  ablate->add_option("--out-dir", ablate_out, "Output directory")->required();
  ablate->add_option("--corpus-size", ablate_corpus, "Training sequences per preset")->capture_default_str();
  ablate->add_option("--epochs", ablate_epochs, "Epochs per preset")->capture_default_str();
  ablate->add_option("--batch-size", ablate_batch, "Sequences per step")->capture_default_str();
  ablate->add_option("--seed", ablate_seed, "Corpus and training seed")->capture_default_str();
  ablate->add_flag("--dry-run", dry_run, "List presets and parameter counts without training");
  select(ablate, [&](RunManifest& run) {
    run.path = fs::path(ablate_out) / "run.json";
    fs::create_directories(ablate_out);
    const AblationGrid grid = ablation_grid_from_string(ablate_grid);
    const unsigned threads = g.resolved_threads();
    run.config = {{"grid", ablate_grid},       {"corpus_size", ablate_corpus}, {"epochs", ablate_epochs},
                  {"batch_size", ablate_batch}, {"dry_run", dry_run}};
    run.seed = ablate_seed;
    const fs::path summary = fs::path(ablate_out) / "summary.csv";
    std::ofstream csv(summary, std::ios::binary | std::ios::trunc);
    if (!csv) throw StorageError("cannot write '" + summary.string() + "'");
    csv << "grid,label,input_size,patch_size,ff_dim,num_layers,lr_initial,parameters,pr_auc,best_f1,log_ratio_pr_auc,"
           "diverged\n";
    for (const AblationPreset& preset : ablation_presets(grid)) {
      const ModelConfig& m = preset.model;
      char head[256];
      std::snprintf(head, sizeof head, "%s,%s,%zu,%zu,%zu,%zu,%g,%zu", ablate_grid.c_str(), preset.label.c_str(),
                    m.input_size, m.patch_size, m.ff_dim, m.num_layers, preset.lr_initial, parameter_count(m));
      if (dry_run) {
        csv << head << ",,,,\n";
        std::printf("%s\n", head);
        continue;
      }
      EndToEndConfig e;
      e.model = m;
      e.corpus_size = ablate_corpus;
      e.corpus.seed = ablate_seed;
      e.train.epochs = ablate_epochs;
      e.train.batch_size = ablate_batch;
      e.train.lr_initial = preset.lr_initial;
      e.train.lr_after_decay = preset.lr_initial / 10.0;
      e.train.decay_epoch = std::max<std::size_t>(1, ablate_epochs - 1);
      e.train.seed = ablate_seed + 1;
      e.bench.sweep.stride = std::max<std::size_t>(1, m.input_size / 4);
      const EndToEndResult r = run_end_to_end(e, threads);
      char tail[160];
      std::snprintf(tail, sizeof tail, ",%.6f,%.6f,%.6f,%d", r.model.report.pr_auc, r.model.report.best_f1,
                    r.log_ratio.report.pr_auc, r.trained.diverged ? 1 : 0);
      csv << head << tail << '\n';
      csv.flush();
      std::printf("%s%s\n", head, tail);
      std::fflush(stdout);
    }
    run.outputs.push_back(summary.string());
    return 0;
  });

  // selftest
  std::string selftest_out;
  auto* selftest = app.add_subcommand("selftest", "Run the invariant suite");
  selftest->add_option("--out-dir", selftest_out, "Write selftest.json here");
  select(selftest, [&](RunManifest& run) {
    if (!selftest_out.empty()) {
      fs::create_directories(selftest_out);
      run.path = fs::path(selftest_out) / "run.json";
    }
    const auto results = run_selftest(g.resolved_threads());
    json report = json::array();
    std::size_t failed = 0;
    for (const auto& r : results) {
      std::printf("[%s] %s  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
      report.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
      failed += r.passed ? 0 : 1;
    }
    std::printf("%zu/%zu checks passed\n", results.size() - failed, results.size());
    if (!selftest_out.empty()) {
      const fs::path path = fs::path(selftest_out) / "selftest.json";
      std::ofstream(path, std::ios::binary | std::ios::trunc) << report.dump(2) << '\n';
      run.outputs.push_back(path.string());
    }
    return failed == 0 ? 0 : 1;
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  RunManifest run;
  run.subcommand = app.get_subcommands().front()->get_name();
  const auto start = std::chrono::steady_clock::now();
  int code = 0;
  std::string status = "ok", message;
  try {
    g.config = load_config(g.config_path);
    code = action(run);
    if (code != 0) status = "failed";
  } catch (const Error& e) {
    status = "error";
    message = std::string(to_string(e.kind())) + ": " + e.what();
    std::fprintf(stderr, "sardist %s: %s\n", run.subcommand.c_str(), message.c_str());
    code = (e.kind() == Error::Kind::storage || e.kind() == Error::Kind::format) ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    status = "error";
    message = e.what();
    std::fprintf(stderr, "sardist %s: %s\n", run.subcommand.c_str(), e.what());
    code = 2;
  }
  if (!g.manifest_path.empty()) run.path = g.manifest_path;
  if (!run.path.empty()) {
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    try {
      run.write(status, message, seconds, g.resolved_threads());
    } catch (const Error& e) {
      std::fprintf(stderr, "sardist: %s\n", e.what());
      if (code == 0) code = 2;
    }
  }
  return code;
}

int main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace sardist::cli
