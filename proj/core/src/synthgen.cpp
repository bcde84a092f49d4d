#include "sardist/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"
#include "sardist/parallel.hpp"

namespace sardist {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// Voronoi land-cover mosaic; the first num_classes sites take classes 0..n-1
// so every class is present.
Tensor<std::uint16_t> land_cover(const SynthConfig& cfg, std::mt19937_64& rng) {
  const std::size_t H = cfg.height, W = cfg.width;
  const std::size_t sites = std::max<std::size_t>(cfg.num_classes, (H * W + 299) / 300);
  std::uniform_real_distribution<double> row(0.0, static_cast<double>(H));
  std::uniform_real_distribution<double> col(0.0, static_cast<double>(W));
  std::uniform_int_distribution<std::size_t> klass(0, cfg.num_classes - 1);
  std::vector<std::array<double, 2>> pos(sites);
  std::vector<std::uint16_t> site_class(sites);
  for (std::size_t s = 0; s < sites; ++s) {
    pos[s] = {row(rng), col(rng)};
    site_class[s] = static_cast<std::uint16_t>(s < cfg.num_classes ? s : klass(rng));
  }
  Tensor<std::uint16_t> classes({H, W});
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      double best = 1e300;
      std::size_t arg = 0;
      for (std::size_t s = 0; s < sites; ++s) {
        const double dr = pos[s][0] - (i + 0.5), dc = pos[s][1] - (j + 0.5);
        const double d2 = dr * dr + dc * dc;
        if (d2 < best) best = d2, arg = s;
      }
      classes(i, j) = site_class[arg];
    }
  }
  return classes;
}

// Union of 1-3 randomly grown 4-connected blobs totalling about
// fraction * H * W pixels.
Mask disturbance_mask(const SynthConfig& cfg, std::mt19937_64& rng) {
  const std::size_t H = cfg.height, W = cfg.width;
  Mask mask({H, W}, 0);
  const auto target = static_cast<std::size_t>(std::llround(cfg.disturbance_fraction * H * W));
  if (target == 0) return mask;
  const std::size_t blobs = std::min<std::size_t>(1 + rng() % 3, target);
  std::uniform_int_distribution<std::size_t> pick_row(0, H - 1), pick_col(0, W - 1);
  for (std::size_t b = 0; b < blobs; ++b) {
    const std::size_t want = target / blobs + (b < target % blobs ? 1 : 0);
    std::vector<std::size_t> frontier{pick_row(rng) * W + pick_col(rng)};
    std::size_t grown = 0;
    while (grown < want && !frontier.empty()) {
      const std::size_t k = rng() % frontier.size();
      const std::size_t cell = frontier[k];
      frontier[k] = frontier.back();
      frontier.pop_back();
      if (mask[cell]) continue;
      mask[cell] = 1;
      ++grown;
      const std::size_t i = cell / W, j = cell % W;
      if (i > 0 && !mask[cell - W]) frontier.push_back(cell - W);
      if (i + 1 < H && !mask[cell + W]) frontier.push_back(cell + W);
      if (j > 0 && !mask[cell - 1]) frontier.push_back(cell - 1);
      if (j + 1 < W && !mask[cell + 1]) frontier.push_back(cell + 1);
    }
  }
  return mask;
}

}  // namespace

void SynthConfig::validate() const {
  if (height < 1 || width < 1) throw ValidationError("synth: raster must be at least 1x1");
  if (num_steps < 3) throw ValidationError("synth: num_steps must be ≥ 3");
  if (num_classes < 1) throw ValidationError("synth: num_classes must be ≥ 1");
  if (!(looks >= 1.0)) throw ValidationError("synth: looks must be ≥ 1");
  if (class_gamma0.size() < num_classes) throw ValidationError("synth: class_gamma0 has fewer rows than classes");
  for (const auto& row : class_gamma0)
    for (double g : row)
      if (!(g > 0.0 && g < 1.0)) throw ValidationError("synth: class_gamma0 entries must lie in (0,1)");
  if (!(disturbance_fraction >= 0.0 && disturbance_fraction <= 1.0))
    throw ValidationError("synth: disturbance_fraction must lie in [0,1]");
  if (!std::isfinite(disturbance_delta_db)) throw ValidationError("synth: disturbance_delta_db must be finite");
  if (!(seasonal_amplitude_db >= 0.0)) throw ValidationError("synth: seasonal_amplitude_db must be ≥ 0");
  if (!(seasonal_period_steps > 0.0)) throw ValidationError("synth: seasonal_period_steps must be > 0");
  if (!class_jitter_db.empty() && class_jitter_db.size() < num_classes)
    throw ValidationError("synth: class_jitter_db has fewer entries than classes");
  for (double j : class_jitter_db)
    if (!(j >= 0.0)) throw ValidationError("synth: class_jitter_db entries must be ≥ 0");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 0.5)) throw ValidationError("synth: clip_epsilon must lie in (0,0.5)");
}

SynthScene generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const std::size_t H = cfg.height, W = cfg.width, T = cfg.num_steps, C = 2;

  Tensor<std::uint16_t> classes = land_cover(cfg, rng);
  Mask truth = disturbance_mask(cfg, rng);

  // Per-frame class multipliers (seasonal sinusoid and acquisition jitter), dB.
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  std::vector<double> class_db(T * cfg.num_classes, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < cfg.num_classes; ++k) {
      const double phase = 2.0 * std::numbers::pi * static_cast<double>(k) / cfg.num_classes;
      double db = cfg.seasonal_amplitude_db *
                  std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / cfg.seasonal_period_steps + phase);
      if (!cfg.class_jitter_db.empty()) db += cfg.class_jitter_db[k] * unit_normal(rng);
      class_db[t * cfg.num_classes + k] = db;
    }
  }

  std::gamma_distribution<double> speckle(cfg.looks, 1.0 / cfg.looks);
  const double disturbance_gain = std::pow(10.0, cfg.disturbance_delta_db / 10.0);
  const double lo = cfg.clip_epsilon, hi = 1.0 - cfg.clip_epsilon;
  TensorF data({T, C, H, W});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
          const std::size_t k = classes(i, j);
          double v = cfg.class_gamma0[k][c] * std::pow(10.0, class_db[t * cfg.num_classes + k] / 10.0);
          v *= speckle(rng);
          if (t + 1 == T && truth(i, j)) v *= disturbance_gain;
          data(t, c, i, j) = static_cast<float>(std::clamp(v, lo, hi));
        }
      }
    }
  }
  return {RasterStack(std::move(data), revisit_timestamps(T)), std::move(truth), std::move(classes)};
}

std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) {
  return splitmix64_mix(master_seed + (index + 1) * kGolden);
}

void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  nlohmann::json j;
  j["master_seed"] = manifest.master_seed;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : manifest.entries) j["entries"].push_back({{"path", e.path}, {"seed", e.seed}});
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StorageError("cannot write manifest '" + path.string() + "'");
  out << j.dump(2) << "\n";
  if (!out) throw StorageError("write failed for '" + path.string() + "'");
}

CorpusManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open manifest '" + path.string() + "'");
  CorpusManifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    for (const auto& e : j.at("entries")) m.entries.push_back({e.at("path").get<std::string>(), e.at("seed").get<std::uint64_t>()});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest '" + path.string() + "': " + e.what());
  }
  return m;
}

SynthConfig corpus_sequence_config(const SynthConfig& cfg, std::size_t index, std::size_t window) {
  SynthConfig seq = cfg;
  seq.height = seq.width = window;
  seq.disturbance_fraction = 0.0;
  seq.seed = derive_seed(cfg.seed, index);
  return seq;
}

CorpusManifest generate_training_corpus(const SynthConfig& cfg, std::size_t count,
                                        const std::filesystem::path& out_dir, std::size_t window,
                                        unsigned threads) {
  if (count < 1) throw ValidationError("corpus: count must be ≥ 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw StorageError("cannot create '" + out_dir.string() + "': " + ec.message());

  CorpusManifest manifest;
  manifest.master_seed = cfg.seed;
  manifest.entries.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "seq_%06zu.rts", i);
    manifest.entries[i] = {name, derive_seed(cfg.seed, i)};
  }
  parallel_for(count, threads, [&](std::size_t i) {
    write_rts(generate(corpus_sequence_config(cfg, i, window)).stack, out_dir / manifest.entries[i].path);
  });
  write_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"height", c.height},
          {"width", c.width},
          {"num_steps", c.num_steps},
          {"num_classes", c.num_classes},
          {"looks", c.looks},
          {"class_gamma0", c.class_gamma0},
          {"disturbance_fraction", c.disturbance_fraction},
          {"disturbance_delta_db", c.disturbance_delta_db},
          {"seasonal_amplitude_db", c.seasonal_amplitude_db},
          {"seasonal_period_steps", c.seasonal_period_steps},
          {"class_jitter_db", c.class_jitter_db},
          {"clip_epsilon", c.clip_epsilon},
          {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig c) {
  try {
    auto read = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    read("height", c.height);
    read("width", c.width);
    read("num_steps", c.num_steps);
    read("num_classes", c.num_classes);
    read("looks", c.looks);
    read("class_gamma0", c.class_gamma0);
    read("disturbance_fraction", c.disturbance_fraction);
    read("disturbance_delta_db", c.disturbance_delta_db);
    read("seasonal_amplitude_db", c.seasonal_amplitude_db);
    read("seasonal_period_steps", c.seasonal_period_steps);
    read("class_jitter_db", c.class_jitter_db);
    read("clip_epsilon", c.clip_epsilon);
    read("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("synth config: ") + e.what());
  }
  return c;
}

}  // namespace sardist
