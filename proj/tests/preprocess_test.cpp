#include <cfloat>
#include <cmath>
#include <random>

#include "doctest.h"
#include "sardist/preprocess.hpp"
#include "sardist/synthgen.hpp"
#include "support.hpp"

using namespace sardist;

namespace {

double spatial_variance(const RasterStack& s, std::size_t t, std::size_t c) {
  double sum = 0.0, sq = 0.0;
  const double n = static_cast<double>(s.height() * s.width());
  for (std::size_t i = 0; i < s.height(); ++i)
    for (std::size_t j = 0; j < s.width(); ++j) {
      const double v = s.at(t, c, i, j);
      sum += v;
      sq += v * v;
    }
  return sq / n - (sum / n) * (sum / n);
}

RasterStack flip_columns(const RasterStack& s) {
  TensorF out(s.data().dims());
  for (std::size_t t = 0; t < s.steps(); ++t)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < s.height(); ++i)
        for (std::size_t j = 0; j < s.width(); ++j) out(t, c, i, s.width() - 1 - j) = s.at(t, c, i, j);
  return RasterStack(out, s.timestamps());
}

RasterStack flip_rows(const RasterStack& s) {
  TensorF out(s.data().dims());
  for (std::size_t t = 0; t < s.steps(); ++t)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < s.height(); ++i)
        for (std::size_t j = 0; j < s.width(); ++j) out(t, c, s.height() - 1 - i, j) = s.at(t, c, i, j);
  return RasterStack(out, s.timestamps());
}

}  // namespace

TEST_SUITE("preprocess") {
  TEST_CASE("logit values") {
    CHECK(logit(0.5) == 0.0);
    CHECK(std::abs(logit(0.9) - 2.1972245773362196) < 1e-12);
    CHECK(inverse_logit(0.0) == 0.5);
    CHECK(std::abs(inverse_logit(std::log(9.0)) - 0.9) < 1e-12);
    for (double x : {0.01, 0.3, 0.99}) CHECK(std::abs(inverse_logit(logit(x)) - x) < 1e-12);
    CHECK_THROWS_AS(logit(0.0), DomainError);
    CHECK_THROWS_AS(logit(1.0), DomainError);
    CHECK_THROWS_AS(logit(-0.2), DomainError);
    CHECK_THROWS_AS(logit(std::nan("")), DomainError);
  }

  TEST_CASE("logit inverts inverse_logit up to the conditioning of the logit") {
    for (double y = -30.0; y <= 30.0; y += 0.125) {
      const double x = inverse_logit(y);
      // An ulp of x near 1 moves the logit by about eps / (1 - x).
      const double tol = 1e-12 + 2 * DBL_EPSILON / (1.0 - x);
      CHECK(std::abs(logit(x) - y) <= tol);
      if (y <= 8.0) CHECK(std::abs(logit(x) - y) < 1e-12);
    }
  }

  TEST_CASE("inverse_logit is monotone and bounded") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-40.0, 40.0);
    for (int i = 0; i < 2000; ++i) {
      double a = u(rng), b = u(rng);
      if (a > b) std::swap(a, b);
      if (a == b) continue;
      CHECK(inverse_logit(a) <= inverse_logit(b));
      if (b - a > 1e-9 && b < 30) CHECK(inverse_logit(a) < inverse_logit(b));
    }
    CHECK(inverse_logit(-800.0) >= 0.0);
    CHECK(inverse_logit(800.0) <= 1.0);
  }

  TEST_CASE("tensor logit matches the scalar form") {
    const RasterStack s = testing::random_stack(2, 4, 4, 8);
    const TensorD y = logit_transform(s);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == logit(static_cast<double>(s.data()[i])));
    const TensorD x = inverse_logit(y);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(x[i] - s.data()[i]) < 1e-7);
  }

  TEST_CASE("clip_open_interval") {
    TensorF data({2, 2, 1, 3}, 0.5f);
    data[0] = 0.0f;
    data[1] = 1.0f;
    data[2] = -3.0f;
    const RasterStack s(data, revisit_timestamps(2));
    const RasterStack c = clip_open_interval(s, 1e-4);
    CHECK(c.data()[0] == static_cast<float>(1e-4));
    CHECK(c.data()[1] == static_cast<float>(1.0 - 1e-4));
    CHECK(c.data()[2] == static_cast<float>(1e-4));
    CHECK(c.data()[3] == 0.5f);
    CHECK_THROWS_AS(clip_open_interval(s, 0.0), ValidationError);
    CHECK_THROWS_AS(clip_open_interval(s, 0.5), ValidationError);
  }

  TEST_CASE("two-pixel ROF problem matches its closed form") {
    // min ½(u1-a)² + ½(u2-b)² + λ|u1-u2|: shrink the gap by 2λ or merge to the mean.
    for (auto [a, b, lambda] : {std::tuple{3.0, 1.0, 0.4}, {3.0, 1.0, 1.5}, {-2.0, 5.0, 1.0}}) {
      const std::vector<double> f = {a, b};
      const auto u = tv_denoise(f, 1, 2, lambda, 2000);
      const double gap = std::abs(a - b);
      const double e1 = gap <= 2 * lambda ? (a + b) / 2 : a - lambda * (a > b ? 1 : -1);
      const double e2 = gap <= 2 * lambda ? (a + b) / 2 : b + lambda * (a > b ? 1 : -1);
      CHECK(u[0] == doctest::Approx(e1).epsilon(1e-9));
      CHECK(u[1] == doctest::Approx(e2).epsilon(1e-9));
    }
  }

  TEST_CASE("TV objective at the output never exceeds the objective at the input") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const std::size_t h = 12 + seed, w = 9 + 2 * seed;
      const TensorD f = testing::random_tensor({h, w}, seed, -5.0, 5.0);
      for (double lambda : {0.1, 1.5, 4.0}) {
        const auto u = tv_denoise(f.values(), h, w, lambda, 50);
        CHECK(tv_objective(u, f.values(), h, w, lambda) <= tv_objective(f.values(), f.values(), h, w, lambda));
      }
    }
  }

  TEST_CASE("constant images are fixed points") {
    TensorF data({2, 2, 10, 13}, 0.07f);
    const RasterStack s(data, revisit_timestamps(2));
    const RasterStack out = despeckle_tv(s, PreprocessConfig{});
    for (std::size_t i = 0; i < out.data().size(); ++i) CHECK(std::abs(out.data()[i] - 0.07f) < 1e-6);
  }

  TEST_CASE("despeckling cuts the variance of a speckled constant scene by more than 4x") {
    SynthConfig cfg;
    cfg.height = cfg.width = 64;
    cfg.num_steps = 3;
    cfg.num_classes = 1;
    cfg.disturbance_fraction = 0.0;
    cfg.seed = 2;
    const RasterStack noisy = generate(cfg).stack;
    const RasterStack clean = despeckle_tv(noisy, PreprocessConfig{});
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t c = 0; c < 2; ++c) CHECK(spatial_variance(clean, t, c) < 0.25 * spatial_variance(noisy, t, c));
  }

  TEST_CASE("despeckling preserves shape, timestamps and range") {
    const RasterStack s = testing::random_stack(3, 17, 11, 6);
    const RasterStack out = despeckle_tv(s, PreprocessConfig{}, 2);
    CHECK(out.data().dims() == s.data().dims());
    CHECK(out.timestamps() == s.timestamps());
    CHECK_NOTHROW(out.check_values());
    CHECK(despeckle_tv(s, PreprocessConfig{}, 1) == out);
  }

  TEST_CASE("mirror boundaries make despeckling commute with flips") {
    const RasterStack s = testing::random_stack(2, 15, 12, 7);
    const PreprocessConfig cfg;
    const RasterStack a = flip_columns(despeckle_tv(s, cfg));
    const RasterStack b = despeckle_tv(flip_columns(s), cfg);
    const RasterStack c = flip_rows(despeckle_tv(s, cfg));
    const RasterStack d = despeckle_tv(flip_rows(s), cfg);
    for (std::size_t i = 0; i < a.data().size(); ++i) {
      CHECK(std::abs(a.data()[i] - b.data()[i]) < 1e-6);
      CHECK(std::abs(c.data()[i] - d.data()[i]) < 1e-6);
    }
  }

  TEST_CASE("non-finite or non-positive input is a domain error") {
    TensorF data({2, 2, 3, 3}, 0.2f);
    data[4] = std::nanf("");
    CHECK_THROWS_AS(despeckle_tv(RasterStack(data, revisit_timestamps(2)), PreprocessConfig{}), DomainError);
    data[4] = 0.0f;
    CHECK_THROWS_AS(despeckle_tv(RasterStack(data, revisit_timestamps(2)), PreprocessConfig{}), DomainError);
  }

  TEST_CASE("config validation and JSON") {
    PreprocessConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.tv_weight = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.tv_iters = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.clip_epsilon = 0.6;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.tv_weight = 2.25;
    CHECK(preprocess_config_from_json(to_json(cfg)).tv_weight == 2.25);
  }

  TEST_CASE("prepare_series is clip, despeckle, logit") {
    const RasterStack s = testing::random_stack(3, 8, 8, 12);
    const PreprocessConfig cfg;
    const TensorD series = prepare_series(s, cfg);
    CHECK(series == logit_transform(despeckle_tv(clip_open_interval(s, cfg.clip_epsilon), cfg)));
  }
}
