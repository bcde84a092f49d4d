#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "sardist/checkpoint.hpp"
#include "sardist/model.hpp"
#include "sardist/training.hpp"
#include "support.hpp"

using namespace sardist;

namespace {

std::size_t linear(std::size_t in, std::size_t out) { return in * out + out; }

std::size_t expected_count(const ModelConfig& c) {
  const std::size_t d = c.d_model, h = c.head_hidden;
  std::size_t n = 0;
  if (c.kind == ModelKind::transformer) {
    const std::size_t pv = c.channels * c.patch_size * c.patch_size;
    const std::size_t np = (c.input_size / c.patch_size) * (c.input_size / c.patch_size);
    n += linear(pv, d) + np * d + c.max_T * d;
    n += c.num_layers * (4 * d + linear(d, 3 * d) + linear(d, d) + linear(d, c.ff_dim) + linear(c.ff_dim, d));
    n += 2 * d;
    n += 2 * (linear(d, h) + linear(h, pv));
  } else {
    const std::size_t pv = c.channels * c.input_size * c.input_size;
    for (std::size_t l = 0; l < c.num_layers; ++l) n += linear(l == 0 ? pv : d, 3 * d) + linear(d, 3 * d);
    n += 2 * (linear(d, h) + linear(h, pv));
  }
  return n;
}

ModelConfig small_transformer() {
  ModelConfig c;
  c.input_size = 8;
  c.patch_size = 4;
  c.d_model = 16;
  c.num_heads = 2;
  c.num_layers = 2;
  c.ff_dim = 32;
  c.head_hidden = 24;
  c.max_T = 6;
  return c;
}

ModelConfig small_gru() {
  ModelConfig c = ModelConfig::gru_default();
  c.input_size = 4;
  c.d_model = 12;
  c.num_layers = 2;
  c.head_hidden = 10;
  return c;
}

TensorD normal_tensor(std::vector<std::size_t> dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  TensorD t(std::move(dims));
  for (double& v : t.values()) v = n(rng);
  return t;
}

double max_abs_diff(const TensorD& a, const TensorD& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("parameter counts match an independent tally") {
    for (const ModelConfig& c : {ModelConfig::transformer_default(), ModelConfig::gru_default(),
                                 ModelConfig::transformer_preset(512, 2), ModelConfig::transformer_preset(768, 4),
                                 ModelConfig::transformer_preset(1024, 8), small_transformer(), small_gru()}) {
      CHECK(parameter_count(c) == expected_count(c));
    }
  }

  TEST_CASE("default sizes are near 3.3M and the ablation extremes near 1.5M and 7.1M") {
    auto near = [](const ModelConfig& c, double target, double tol) {
      return std::abs(static_cast<double>(parameter_count(c)) / target - 1.0) < tol;
    };
    CHECK(near(ModelConfig::transformer_default(), 3.3e6, 0.05));
    CHECK(near(ModelConfig::gru_default(), 3.3e6, 0.05));
    CHECK(near(ModelConfig::transformer_preset(512, 2), 1.5e6, 0.10));
    CHECK(near(ModelConfig::transformer_preset(1024, 8), 7.1e6, 0.10));
  }

  TEST_CASE("layout tiles the flat vector without gaps") {
    const ParameterLayout layout = build_layout(ModelConfig::transformer_default());
    std::size_t offset = 0;
    for (const auto& spec : layout.specs()) {
      CHECK(spec.offset == offset);
      std::size_t n = 1;
      for (std::size_t d : spec.dims) n *= d;
      CHECK(spec.size == n);
      offset += n;
    }
    CHECK(offset == layout.total());
    CHECK_THROWS_AS(layout.find("nope"), ContractError);
  }

  TEST_CASE("initializer follows the documented distributions") {
    const Model m = Model::initialized(ModelConfig::transformer_default(), 8);
    const auto w = m.parameter("blocks.0.ff.fc2.weight");
    const double bound = 1.0 / std::sqrt(768.0);
    CHECK(std::all_of(w.begin(), w.end(), [&](double v) { return std::abs(v) <= bound; }));
    const auto gain = m.parameter("final_norm.gain");
    CHECK(std::all_of(gain.begin(), gain.end(), [](double v) { return v == 1.0; }));
    const auto emb = m.parameter("spatial_embed");
    double sq = 0.0;
    for (double v : emb) sq += v * v;
    CHECK(std::sqrt(sq / static_cast<double>(emb.size())) == doctest::Approx(0.02).epsilon(0.1));
    CHECK(Model::initialized(ModelConfig::transformer_default(), 8).parameters()[100] == m.parameters()[100]);
  }

  TEST_CASE("token count is T times patches per frame") {
    const Model m = Model::initialized(ModelConfig::transformer_default(), 1);
    CHECK(m.patchify(TensorD({10, 2, 16, 16})).tokens.dim(0) == 40);
    const auto seq = m.patchify(TensorD({2, 2, 16, 16}));
    CHECK(seq.tokens.dim(0) == 8);
    CHECK(seq.tokens.dim(1) == 256);
    CHECK(seq.time_step == std::vector<std::size_t>{0, 0, 0, 0, 1, 1, 1, 1});
    CHECK(seq.patch_row == std::vector<std::size_t>{0, 0, 1, 1, 0, 0, 1, 1});
    CHECK(seq.patch_col == std::vector<std::size_t>{0, 1, 0, 1, 0, 1, 0, 1});
  }

  TEST_CASE("zero patch with zero projection embeds to spatial plus temporal") {
    Model m = Model::initialized(ModelConfig::transformer_default(), 2);
    for (double& v : m.parameter("patch_embed.weight")) v = 0.0;
    for (double& v : m.parameter("patch_embed.bias")) v = 0.0;
    const auto seq = m.patchify(TensorD({3, 2, 16, 16}));
    const auto spatial = m.parameter("spatial_embed");
    const auto temporal = m.parameter("temporal_embed");
    for (std::size_t n = 0; n < seq.tokens.dim(0); ++n) {
      const std::size_t p = seq.patch_row[n] * 2 + seq.patch_col[n];
      for (std::size_t k = 0; k < 256; ++k)
        CHECK(seq.tokens(n, k) == spatial[p * 256 + k] + temporal[seq.time_step[n] * 256 + k]);
    }
  }

  TEST_CASE("patch extraction and assembly invert each other") {
    const TensorD w = testing::random_tensor({3, 2, 16, 16}, 4);
    const TensorD patches = extract_patches(w, 8);
    REQUIRE(patches.dim(0) == 12);
    REQUIRE(patches.dim(1) == 128);
    // Token 5 is frame 1, patch row 0, column 1; value (c=1, i=2, j=3).
    CHECK(patches(5, 64 + 2 * 8 + 3) == w(1, 1, 2, 8 + 3));
    const TensorD frame = assemble_patches(patches, 2, 16, 8);
    CHECK(frame.dims() == std::vector<std::size_t>{3, 2, 16, 16});
    CHECK(frame == w);
  }

  TEST_CASE("single-token attention returns V") {
    const TensorD q = testing::random_tensor({1, 8}, 1), k = testing::random_tensor({1, 8}, 2);
    const TensorD v = testing::random_tensor({1, 8}, 3);
    CHECK(attention(q, k, v) == v);
  }

  TEST_CASE("zero queries average the values") {
    const TensorD q({5, 4}, 0.0), k = testing::random_tensor({5, 4}, 5), v = testing::random_tensor({5, 3}, 6);
    const TensorD out = attention(q, k, v);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double mean = 0.0;
        for (std::size_t r = 0; r < 5; ++r) mean += v(r, j) / 5.0;
        CHECK(out(i, j) == doctest::Approx(mean).epsilon(1e-12));
      }
  }

  TEST_CASE("sharp attention picks the matching key") {
    const double c = 50.0;
    TensorD q({2, 2}, 0.0), k({2, 2}, 0.0), v({2, 2});
    q(0, 0) = q(1, 1) = c;
    k(0, 0) = k(1, 1) = c;
    v(0, 0) = 1.0, v(0, 1) = 2.0, v(1, 0) = 3.0, v(1, 1) = 4.0;
    const TensorD out = attention(q, k, v);
    CHECK(out(0, 0) == doctest::Approx(1.0));
    CHECK(out(0, 1) == doctest::Approx(2.0));
    CHECK(out(1, 0) == doctest::Approx(3.0));
    CHECK(out(1, 1) == doctest::Approx(4.0));
    // Scores of 1e6 would overflow exp without the row max shift.
    q(0, 0) = q(1, 1) = k(0, 0) = k(1, 1) = 1e3;
    const TensorD big = attention(q, k, v);
    for (double x : big.values()) CHECK(std::isfinite(x));
  }

  TEST_CASE("sigma never drops below the floor") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Model m = Model::initialized(small_transformer(), seed);
      for (double& b : m.parameter("sigma_head.fc2.bias")) b = -40.0;
      const auto est = m.forward(normal_tensor({3, 2, 8, 8}, seed), Mode::eval);
      for (double s : est.sigma.values()) CHECK(s >= 1e-3);
      CHECK_NOTHROW(est.validate());
    }
  }

  TEST_CASE("eval mode is deterministic, train mode depends only on the dropout seed") {
    const Model m = Model::initialized(small_transformer(), 3);
    const TensorD w = normal_tensor({4, 2, 8, 8}, 9);
    CHECK(m.forward(w, Mode::eval).mu == m.forward(w, Mode::eval).mu);
    CHECK(m.forecast(w).mu == m.forward(w, Mode::eval).mu);
    std::mt19937_64 a(1), b(1), c(2);
    const auto ta = m.forward(w, Mode::train, &a), tb = m.forward(w, Mode::train, &b), tc = m.forward(w, Mode::train, &c);
    CHECK(ta.mu == tb.mu);
    CHECK_FALSE(ta.mu == tc.mu);
    CHECK_FALSE(ta.mu == m.forward(w, Mode::eval).mu);
    CHECK_THROWS_AS(m.forward(w, Mode::train), ContractError);
  }

  TEST_CASE("reordering the frames changes the forecast") {
    for (const ModelConfig& cfg : {small_transformer(), small_gru()}) {
      const Model m = Model::initialized(cfg, 4);
      const std::size_t S = cfg.input_size;
      const TensorD w = normal_tensor({3, 2, S, S}, 10);
      TensorD swapped = w;
      const std::size_t frame = 2 * S * S;
      for (std::size_t i = 0; i < frame; ++i) std::swap(swapped[i], swapped[2 * frame + i]);
      CHECK(max_abs_diff(m.forecast(w).mu, m.forecast(swapped).mu) > 1e-6);
    }
  }

  TEST_CASE("window contracts") {
    const Model tf = Model::initialized(small_transformer(), 5);
    CHECK_THROWS_AS(tf.forecast(TensorD({1, 2, 8, 8})), ContractError);
    CHECK_THROWS_AS(tf.forecast(TensorD({7, 2, 8, 8})), ContractError);
    CHECK_THROWS_AS(tf.forecast(TensorD({3, 2, 8, 4})), ShapeError);
    CHECK_THROWS_AS(tf.forecast(TensorD({3, 1, 8, 8})), ShapeError);
    CHECK_NOTHROW(tf.forecast(TensorD({6, 2, 8, 8})));

    const Model gru = Model::initialized(small_gru(), 5);
    const auto est = gru.forecast(normal_tensor({2, 2, 4, 4}, 1));
    CHECK(est.mu.dims() == std::vector<std::size_t>{2, 4, 4});
    CHECK_NOTHROW(gru.forecast(TensorD({20, 2, 4, 4})));
    CHECK_THROWS_AS(gru.patchify(TensorD({2, 2, 4, 4})), ContractError);
  }

  TEST_CASE("transformer gradients agree with central differences") {
    const ModelConfig cfg = small_transformer();
    const Model m = Model::initialized(cfg, 6);
    const TensorD window = normal_tensor({4, 2, 8, 8}, 11), target = normal_tensor({2, 8, 8}, 12);
    const ModelObjective objective(cfg, window, target);
    GradientCheckOptions options;
    options.num_probes = 200;
    options.seed = 3;
    const auto report = gradient_check(objective, m.parameters(), options);
    CHECK(report.probed.size() == 200);
    CHECK(report.max_relative_error < 1e-4);
  }

  TEST_CASE("GRU gradients agree with central differences") {
    const ModelConfig cfg = small_gru();
    const Model m = Model::initialized(cfg, 7);
    const TensorD window = normal_tensor({5, 2, 4, 4}, 13), target = normal_tensor({2, 4, 4}, 14);
    CHECK(gradient_check(cfg, m.parameters(), window, target, 200, 4) < 1e-4);
  }

  TEST_CASE("default transformer passes a 50-probe gradient check") {
    const ModelConfig cfg = ModelConfig::transformer_default();
    const Model m = Model::initialized(cfg, 3);
    const TensorD window = normal_tensor({6, 2, 16, 16}, 5), target = normal_tensor({2, 16, 16}, 6);
    CHECK(gradient_check(cfg, m.parameters(), window, target, 50, 1) < 1e-4);
  }

  TEST_CASE("checkpoint round trip") {
    testing::TempDir dir;
    const Model m = Model::initialized(small_transformer(), 8);
    save_checkpoint(m, dir.path());
    const Model back = load_checkpoint(dir.path());
    CHECK(back.config() == m.config());
    for (std::size_t i = 0; i < m.parameters().size(); ++i)
      CHECK(back.parameters()[i] == static_cast<double>(static_cast<float>(m.parameters()[i])));
    const TensorD w = normal_tensor({3, 2, 8, 8}, 2);
    CHECK(max_abs_diff(back.forecast(w).mu, m.forecast(w).mu) < 1e-4);

    testing::TempDir other;
    save_checkpoint(m, other.path());
    CHECK(testing::read_bytes(dir / "weights.rts") == testing::read_bytes(other / "weights.rts"));
    CHECK(testing::read_bytes(dir / "index.json") == testing::read_bytes(other / "index.json"));
  }

  TEST_CASE("checkpoint errors") {
    testing::TempDir dir;
    CHECK_THROWS_AS(load_checkpoint(dir.path()), StorageError);
    save_checkpoint(Model::initialized(small_transformer(), 1), dir.path());
    ModelConfig bigger = small_transformer();
    bigger.ff_dim = 64;
    testing::write_bytes(dir / "model.json",
                         [&] {
                           const std::string s = to_json(bigger).dump();
                           return std::vector<char>(s.begin(), s.end());
                         }());
    CHECK_THROWS_AS(load_checkpoint(dir.path()), FormatError);
  }

  TEST_CASE("config validation and JSON") {
    ModelConfig c = ModelConfig::transformer_default();
    CHECK_NOTHROW(c.validate());
    c.patch_size = 5;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = ModelConfig::transformer_default();
    c.num_heads = 3;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = ModelConfig::transformer_default();
    c.dropout = 1.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    CHECK(model_config_from_json(to_json(small_gru())) == small_gru());
    CHECK(model_kind_from_string("gru") == ModelKind::gru);
    CHECK_THROWS_AS(model_kind_from_string("lstm"), ValidationError);
  }
}
