#include "selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>

#include "sardist/disturbance.hpp"
#include "sardist/evaluation.hpp"
#include "sardist/inference.hpp"
#include "sardist/preprocess.hpp"
#include "sardist/synthgen.hpp"
#include "sardist/training.hpp"

namespace sardist::cli {

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0) {
  char buf[128];
  std::snprintf(buf, sizeof buf, pattern, a, b);
  return buf;
}

class ConstantForecaster final : public Forecaster {
 public:
  explicit ConstantForecaster(std::size_t window) : window_(window) {}
  std::size_t window_size() const override { return window_; }
  DistributionEstimate forecast(const TensorD& w) const override {
    return {TensorD({w.dim(1), window_, window_}, 1.0), TensorD({w.dim(1), window_, window_}, 1.0)};
  }

 private:
  std::size_t window_;
};

CheckResult parameter_counts() {
  const double tf = static_cast<double>(parameter_count(ModelConfig::transformer_default()));
  const double gru = static_cast<double>(parameter_count(ModelConfig::gru_default()));
  const double small = static_cast<double>(parameter_count(ModelConfig::transformer_preset(512, 2)));
  const double large = static_cast<double>(parameter_count(ModelConfig::transformer_preset(1024, 8)));
  const bool ok = std::abs(tf / 3.3e6 - 1) < 0.05 && std::abs(gru / 3.3e6 - 1) < 0.05 &&
                  std::abs(small / 1.5e6 - 1) < 0.10 && std::abs(large / 7.1e6 - 1) < 0.10;
  return {"parameter counts", ok, fmt("transformer %.0f, gru %.0f", tf, gru)};
}

CheckResult token_count() {
  const Model m = Model::initialized(ModelConfig::transformer_default(), 1);
  const auto seq = m.patchify(TensorD({10, 2, 16, 16}, 0.0));
  return {"token count", seq.tokens.dim(0) == 40, fmt("%.0f tokens for T=10", static_cast<double>(seq.tokens.dim(0)))};
}

CheckResult gradients() {
  ModelConfig cfg = ModelConfig::transformer_default();
  const Model m = Model::initialized(cfg, 3);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  TensorD window({6, 2, 16, 16}), target({2, 16, 16});
  for (double& v : window.values()) v = normal(rng);
  for (double& v : target.values()) v = normal(rng);
  const double err = gradient_check(cfg, m.parameters(), window, target, 50, 1);
  return {"gradient check", err < 1e-4, fmt("max relative error %.2e", err)};
}

CheckResult loss_value() {
  DistributionEstimate est{TensorD({2, 4, 4}, 0.3), TensorD({2, 4, 4}, 1.0)};
  const double v = nll_loss(est, TensorD({2, 4, 4}, 0.3));
  return {"nll at zero residual", std::abs(v - 0.5 * std::log(2 * M_PI)) < 1e-12 && std::abs(v - 0.918939) < 1e-6,
          fmt("%.9f", v)};
}

CheckResult metric_oracle() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.01, 0.99), s(0.1, 2.0), x(-3.0, 3.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    DistributionEstimate est{TensorD({2, 8, 8}), TensorD({2, 8, 8})};
    TensorD post({2, 8, 8}), ref({2, 8, 8}), lin({2, 8, 8});
    for (std::size_t i = 0; i < post.size(); ++i) {
      est.mu[i] = x(rng);
      est.sigma[i] = s(rng);
      post[i] = x(rng);
      ref[i] = u(rng);
      lin[i] = u(rng);
    }
    const auto d = mahalanobis_metric(est, post);
    const auto l = log_ratio_metric(ref, lin);
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 8; ++c) {
        double dm = 0.0, lm = 0.0;
        for (std::size_t p = 0; p < 2; ++p) {
          dm = std::max(dm, std::abs(post(p, r, c) - est.mu(p, r, c)) / est.sigma(p, r, c));
          lm = std::max(lm, std::abs(std::log10(lin(p, r, c)) - std::log10(ref(p, r, c))));
        }
        worst = std::max({worst, std::abs(dm - d.values(r, c)), std::abs(lm - l.values(r, c))});
      }
  }
  return {"metric oracles", worst <= 1e-12, fmt("max deviation %.2e", worst)};
}

CheckResult sweep_exactness(unsigned threads) {
  const ConstantForecaster stub(16);
  const TensorD series({4, 2, 64, 64}, 0.0);
  bool ok = true;
  for (std::size_t stride : {1, 4, 8, 16}) {
    const auto est = sweep_estimate(stub, series, {stride, 64, threads});
    ok = ok && std::all_of(est.mu.values().begin(), est.mu.values().end(), [](double v) { return v == 1.0; });
  }
  return {"sweep averaging", ok, "constant forecaster, strides 1/4/8/16"};
}

CheckResult pr_oracle() {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LabeledMetricSet set;
  for (int i = 0; i < 2000; ++i) {
    const bool pos = u(rng) < 0.3;
    set.labels.push_back(pos);
    set.scores.push_back(u(rng) + (pos ? 0.3 : 0.0));
  }
  const EvalReport report = pr_curve(set, 256);
  // Brute force: every distinct score as a ≥ threshold, highest first.
  std::vector<double> uniq = set.scores;
  std::sort(uniq.begin(), uniq.end(), std::greater<>());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  const double positives = static_cast<double>(set.positives());
  double area = 0.0, prev_r = 0.0, prev_p = -1.0;
  for (double t : uniq) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < set.scores.size(); ++i)
      if (set.scores[i] >= t) (set.labels[i] ? tp : fp) += 1;
    const double p = tp / (tp + fp), r = tp / positives;
    if (prev_p < 0) prev_p = p;
    area += (r - prev_r) * (p + prev_p) / 2;
    prev_r = r;
    prev_p = p;
  }
  const double diff = std::abs(area - report.pr_auc);
  return {"pr-auc oracle", diff < 0.005, fmt("downsampled %.4f vs exhaustive %.4f", report.pr_auc, area)};
}

CheckResult tail_fraction() {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  std::size_t over = 0;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::max(std::abs(normal(rng)), std::abs(normal(rng)));
    over += d > 3.0;
  }
  const double frac = static_cast<double>(over) / n;
  return {"tail probability", frac < 0.01, fmt("P(d > 3) = %.5f over two channels", frac)};
}

CheckResult rts_roundtrip() {
  SynthConfig cfg;
  cfg.height = cfg.width = 12;
  cfg.num_steps = 4;
  cfg.seed = 3;
  const RasterStack stack = generate(cfg).stack;
  RtsContainer c{stack.data(), stack.timestamps(), stack.pol_names(), {}};
  const auto bytes = encode_rts(c);
  const RtsContainer back = decode_rts(bytes);
  return {"rts round trip", back.data == stack.data() && encode_rts(back) == bytes, std::to_string(bytes.size()) + " bytes"};
}

CheckResult tv_flip() {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal;
  const std::size_t h = 9, w = 11;
  std::vector<double> f(h * w), flipped(h * w);
  for (double& v : f) v = normal(rng);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) flipped[r * w + (w - 1 - c)] = f[r * w + c];
  const auto a = tv_denoise(f, h, w, 0.5, 30);
  const auto b = tv_denoise(flipped, h, w, 0.5, 30);
  double worst = 0.0;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) worst = std::max(worst, std::abs(a[r * w + c] - b[r * w + (w - 1 - c)]));
  return {"despeckle flip symmetry", worst < 1e-12, fmt("max deviation %.2e", worst)};
}

CheckResult adam_first_step() {
  std::vector<double> params = {0.5, -0.25, 1.0}, grads = {0.3, -2.0, 0.05};
  AdamState state;
  AdamHyper hyper;
  const auto before = params;
  adam_step(params, grads, state, hyper);
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double expected = -hyper.lr * grads[i] / (std::abs(grads[i]) + hyper.eps);
    worst = std::max(worst, std::abs((params[i] - before[i]) - expected));
  }
  return {"adam first step", worst < 1e-15, fmt("max deviation %.2e", worst)};
}

}  // namespace

std::vector<CheckResult> run_selftest(unsigned threads) {
  std::vector<std::function<CheckResult()>> checks = {
      parameter_counts, token_count, gradients,      loss_value,   metric_oracle, [threads] { return sweep_exactness(threads); },
      pr_oracle,        tail_fraction, rts_roundtrip, tv_flip,      adam_first_step};
  std::vector<CheckResult> out;
  for (const auto& check : checks) {
    try {
      out.push_back(check());
    } catch (const std::exception& e) {
      out.push_back({"(exception)", false, e.what()});
    }
  }
  return out;
}

}  // namespace sardist::cli
