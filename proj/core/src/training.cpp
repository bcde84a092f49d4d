#include "sardist/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include "sardist/parallel.hpp"

namespace sardist {

namespace {

void check_estimate_target(const DistributionEstimate& est, const TensorD& target) {
  if (est.mu.dims() != target.dims() || est.sigma.dims() != target.dims()) {
    throw ShapeError("nll_loss: estimate " + shape_string(est.mu.dims()) + " vs target " + shape_string(target.dims()));
  }
}

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

double nll_loss(const DistributionEstimate& est, const TensorD& target) {
  check_estimate_target(est, target);
  double sum = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double s = est.sigma[i];
    if (!(s > 0.0)) throw DomainError("nll_loss: sigma must be > 0");
    const double r = target[i] - est.mu[i];
    sum += kHalfLog2Pi + std::log(s) + r * r / (2.0 * s * s);
  }
  return sum / static_cast<double>(target.size());
}

double nll_loss_gradient(const DistributionEstimate& est, const TensorD& target, TensorD& dmu, TensorD& dsigma) {
  check_estimate_target(est, target);
  const auto n = static_cast<double>(target.size());
  dmu = TensorD(target.dims());
  dsigma = TensorD(target.dims());
  double sum = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double s = est.sigma[i];
    if (!(s > 0.0)) throw DomainError("nll_loss: sigma must be > 0");
    const double r = target[i] - est.mu[i];
    const double inv_var = 1.0 / (s * s);
    sum += kHalfLog2Pi + std::log(s) + 0.5 * r * r * inv_var;
    dmu[i] = -r * inv_var / n;
    dsigma[i] = (1.0 / s - r * r * inv_var / s) / n;
  }
  return sum / n;
}

void TrainConfig::validate(const ModelConfig& model) const {
  if (batch_size < 1 || epochs < 1) throw ValidationError("train: batch_size and epochs must be ≥ 1");
  if (!(lr_initial > 0.0) || !(lr_after_decay > 0.0)) throw ValidationError("train: learning rates must be > 0");
  if (lr_after_decay > lr_initial) throw ValidationError("train: lr_after_decay must not exceed lr_initial");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw ValidationError("train: invalid Adam hyperparameters");
  }
  if (T_min < 2 || T_min > T_max) throw ValidationError("train: need 2 ≤ T_min ≤ T_max");
  if (model.kind == ModelKind::transformer && T_max > model.max_T) {
    throw ValidationError("train: T_max exceeds the model's max_T");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size}, {"epochs", c.epochs},         {"lr_initial", c.lr_initial},
          {"lr_after_decay", c.lr_after_decay}, {"decay_epoch", c.decay_epoch}, {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2}, {"adam_eps", c.adam_eps},     {"T_min", c.T_min},
          {"T_max", c.T_max},           {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  try {
    auto read = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    read("batch_size", c.batch_size);
    read("epochs", c.epochs);
    read("lr_initial", c.lr_initial);
    read("lr_after_decay", c.lr_after_decay);
    read("decay_epoch", c.decay_epoch);
    read("adam_beta1", c.adam_beta1);
    read("adam_beta2", c.adam_beta2);
    read("adam_eps", c.adam_eps);
    read("T_min", c.T_min);
    read("T_max", c.T_max);
    read("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  return c;
}

TrainingCorpus make_corpus(const std::vector<RasterStack>& stacks, const PreprocessConfig& prep, unsigned threads) {
  TrainingCorpus corpus;
  corpus.sequences.resize(stacks.size());
  corpus.sources.resize(stacks.size());
  parallel_for(stacks.size(), threads, [&](std::size_t i) { corpus.sequences[i] = prepare_series(stacks[i], prep); });
  return corpus;
}

TrainingCorpus load_corpus(const std::filesystem::path& manifest_path, const PreprocessConfig& prep, unsigned threads) {
  const CorpusManifest manifest = read_manifest(manifest_path);
  const auto dir = manifest_path.parent_path();
  TrainingCorpus corpus;
  corpus.sequences.resize(manifest.entries.size());
  corpus.sources.resize(manifest.entries.size());
  parallel_for(manifest.entries.size(), threads, [&](std::size_t i) {
    const auto path = dir / manifest.entries[i].path;
    corpus.sequences[i] = prepare_series(read_rts(path), prep);
    corpus.sources[i] = path.string();
  });
  return corpus;
}

std::vector<BatchPlan> plan_epoch(const TrainingCorpus& corpus, const TrainConfig& cfg, std::size_t window,
                                  std::mt19937_64& rng) {
  if (corpus.sequences.empty()) throw ContractError("training: empty corpus");
  for (const auto& seq : corpus.sequences) {
    if (seq.dim(0) < cfg.T_max + 1) {
      throw ContractError("training: corpus sequence has " + std::to_string(seq.dim(0)) + " frames, need T_max+1=" +
                          std::to_string(cfg.T_max + 1));
    }
    if (seq.dim(2) < window || seq.dim(3) < window) throw ContractError("training: corpus windows smaller than model input");
  }
  std::vector<std::size_t> order(corpus.sequences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  std::uniform_int_distribution<std::size_t> pick_T(cfg.T_min, cfg.T_max);
  std::vector<BatchPlan> plans;
  for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
    BatchPlan plan;
    plan.steps = pick_T(rng);
    const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
    for (std::size_t k = begin; k < end; ++k) {
      const TensorD& seq = corpus.sequences[order[k]];
      std::uniform_int_distribution<std::size_t> row(0, seq.dim(2) - window), col(0, seq.dim(3) - window);
      plan.samples.push_back({order[k], plan.steps, plan.steps, row(rng), col(rng)});
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

Batch materialize(const TrainingCorpus& corpus, const BatchPlan& plan, std::size_t window) {
  Batch batch;
  for (const SampleRef& ref : plan.samples) {
    const TensorD& seq = corpus.sequences.at(ref.sequence);
    const std::size_t C = seq.dim(1);
    TensorD input({ref.steps, C, window, window});
    TensorD target({C, window, window});
    for (std::size_t t = 0; t <= ref.steps; ++t)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < window; ++i)
          for (std::size_t j = 0; j < window; ++j) {
            const double v = seq(t, c, ref.row0 + i, ref.col0 + j);
            if (t < ref.steps) input(t, c, i, j) = v;
            else target(c, i, j) = v;
          }
    batch.windows.push_back(std::move(input));
    batch.targets.push_back(std::move(target));
    batch.provenance.push_back(ref);
  }
  return batch;
}

Batch sample_batch(const TrainingCorpus& corpus, std::mt19937_64& rng, const TrainConfig& cfg, std::size_t window) {
  return materialize(corpus, plan_epoch(corpus, cfg, window, rng).front(), window);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamHyper& h) {
  if (params.size() != grads.size()) throw ShapeError("adam: parameter/gradient size mismatch");
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient, step rejected");
  }
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
  }
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const TrainingCorpus& corpus,
                  const EpochCallback& on_epoch) {
  cfg.validate(model_cfg);
  TrainResult result{Model::initialized(model_cfg, splitmix64_mix(cfg.seed + 1)), {}, false, {}};
  Model& model = result.model;
  std::mt19937_64 plan_rng(splitmix64_mix(cfg.seed + 2));
  const std::uint64_t dropout_base = splitmix64_mix(cfg.seed + 3);
  const std::size_t window = model_cfg.input_size;
  const std::size_t P = model.parameters().size();
  const unsigned workers = std::max(1u, cfg.threads);

  AdamState adam;
  std::vector<AlignedVector<double>> partial(workers, AlignedVector<double>(P));
  AlignedVector<double> grad(P);
  std::uint64_t sample_counter = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate(epoch);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (const BatchPlan& plan : plan_epoch(corpus, cfg, window, plan_rng)) {
      const Batch batch = materialize(corpus, plan, window);
      const std::size_t B = batch.windows.size();
      std::vector<double> losses(B);
      const std::size_t groups = std::min<std::size_t>(workers, B);
      parallel_for(groups, workers, [&](std::size_t gidx) {
        auto& acc = partial[gidx];
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t i = B * gidx / groups; i < B * (gidx + 1) / groups; ++i) {
          std::mt19937_64 rng(derive_seed(dropout_base, sample_counter + i));
          losses[i] = model.loss_and_gradient(batch.windows[i], batch.targets[i], Mode::train, &rng, acc);
        }
      });
      sample_counter += B;

      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t gidx = 0; gidx < groups; ++gidx)
        for (std::size_t k = 0; k < P; ++k) grad[k] += partial[gidx][k];
      const double inv_b = 1.0 / static_cast<double>(B);
      for (double& g : grad) g *= inv_b;

      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      if (!std::isfinite(batch_loss)) {
        result.diverged = true;
        result.message = "loss became non-finite in epoch " + std::to_string(epoch);
        return result;
      }
      try {
        adam_step(model.parameters(), grad, adam, {lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
      } catch (const NumericError& e) {
        result.diverged = true;
        result.message = std::string(e.what()) + " in epoch " + std::to_string(epoch);
        return result;
      }
      loss_sum += batch_loss;
      loss_count += B;
    }
    result.curve.push_back({epoch, loss_sum / static_cast<double>(loss_count), lr});
    if (on_epoch && !on_epoch(result.curve.back())) break;
  }
  return result;
}

void write_loss_curve(const std::vector<EpochRecord>& curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StorageError("cannot write '" + path.string() + "'");
  out << "epoch,mean_nll,lr\n";
  char line[128];
  for (const auto& r : curve) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.10g\n", r.epoch, r.mean_nll, r.lr);
    out << line;
  }
  if (!out) throw StorageError("write failed for '" + path.string() + "'");
}

ModelObjective::ModelObjective(ModelConfig cfg, TensorD window, TensorD target)
    : model_(std::move(cfg)), window_(std::move(window)), target_(std::move(target)) {}

double ModelObjective::loss(std::span<const double> params) const {
  std::copy(params.begin(), params.end(), model_.parameters().begin());
  return nll_loss(model_.forward(window_, Mode::eval), target_);
}

double ModelObjective::loss_and_gradient(std::span<const double> params, std::span<double> grad) const {
  std::copy(params.begin(), params.end(), model_.parameters().begin());
  std::fill(grad.begin(), grad.end(), 0.0);
  return model_.loss_and_gradient(window_, target_, Mode::eval, nullptr, grad);
}

GradientCheckReport gradient_check(const Objective& objective, std::span<const double> params,
                                   const GradientCheckOptions& options) {
  std::vector<double> theta(params.begin(), params.end());
  std::vector<double> grad(theta.size());
  objective.loss_and_gradient(theta, grad);

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, theta.size() - 1);
  std::set<std::size_t> chosen(options.forced.begin(), options.forced.end());
  const std::size_t want = std::min(theta.size(), chosen.size() + options.num_probes);
  while (chosen.size() < want) chosen.insert(pick(rng));

  GradientCheckReport report;
  for (std::size_t idx : chosen) {
    const double original = theta[idx];
    const double up = original + options.step, down = original - options.step;
    theta[idx] = up;
    const double loss_up = objective.loss(theta);
    theta[idx] = down;
    const double loss_down = objective.loss(theta);
    theta[idx] = original;
    const double numeric = (loss_up - loss_down) / (up - down);
    const double analytic = grad[idx];
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    report.max_relative_error = std::max(report.max_relative_error, std::abs(numeric - analytic) / denom);
    report.probed.push_back(idx);
    report.analytic.push_back(analytic);
    report.numeric.push_back(numeric);
  }
  return report;
}

double gradient_check(const ModelConfig& cfg, std::span<const double> params, const TensorD& window,
                      const TensorD& target, std::size_t num_probes, std::uint64_t seed) {
  const ModelObjective objective(cfg, window, target);
  GradientCheckOptions options;
  options.num_probes = num_probes;
  options.seed = seed;
  return gradient_check(objective, params, options).max_relative_error;
}

}  // namespace sardist
