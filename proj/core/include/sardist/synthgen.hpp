#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sardist/raster_store.hpp"

namespace sardist {

/// Seeded synthetic SAR scene description.
///
/// Each frame is class γ⁰ × seasonal multiplier × per-class acquisition
/// jitter × unit-mean Gamma(L, 1/L) speckle. The final frame is additionally
/// scaled by 10^(delta_db/10) inside the disturbance mask.
struct SynthConfig {
  std::size_t height = 128;
  std::size_t width = 128;
  std::size_t num_steps = 11;
  std::size_t num_classes = 4;
  double looks = 9.0;
  /// Mean backscatter per class, {VV, VH}. Must hold at least num_classes rows.
  std::vector<std::array<double, 2>> class_gamma0 = {
      {0.12, 0.030}, {0.06, 0.012}, {0.30, 0.060}, {0.025, 0.005}};
  double disturbance_fraction = 0.05;
  double disturbance_delta_db = -6.0;
  double seasonal_amplitude_db = 0.0;
  double seasonal_period_steps = 30.0;
  /// Standard deviation (dB) of a per-class, per-acquisition offset shared by
  /// every pixel of the class. Empty means no jitter.
  std::vector<double> class_jitter_db;
  double clip_epsilon = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const SynthConfig& cfg);
/// Overlays the keys present in `j` onto `base`.
SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig base = {});

struct SynthScene {
  RasterStack stack;
  Mask truth;
  /// Land-cover class per pixel, H×W.
  Tensor<std::uint16_t> classes;
};

SynthScene generate(const SynthConfig& cfg);

/// splitmix64 finalizer; corpus seeds are splitmix64_mix(master + (i + 1) * 0x9E3779B97F4A7C15).
std::uint64_t splitmix64_mix(std::uint64_t z);
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index);

struct CorpusEntry {
  std::string path;  // relative to the manifest's directory
  std::uint64_t seed = 0;
};

struct CorpusManifest {
  std::uint64_t master_seed = 0;
  std::vector<CorpusEntry> entries;
};

void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);
CorpusManifest read_manifest(const std::filesystem::path& path);

/// Scene description of corpus sequence `index`: undisturbed, window×window,
/// seeded with derive_seed(cfg.seed, index).
SynthConfig corpus_sequence_config(const SynthConfig& cfg, std::size_t index, std::size_t window);

/// Writes `count` undisturbed window sequences (num_steps × 2 × window × window)
/// plus manifest.json into out_dir. cfg.seed is the master seed.
CorpusManifest generate_training_corpus(const SynthConfig& cfg, std::size_t count,
                                        const std::filesystem::path& out_dir,
                                        std::size_t window = 16, unsigned threads = 1);

}  // namespace sardist
