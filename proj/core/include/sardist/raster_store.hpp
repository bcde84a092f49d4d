#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sardist/tensor.hpp"

namespace sardist {

/// Coregistered dual-polarization backscatter series, T×C×H×W.
///
/// Construction enforces the structural invariants (T ≥ 2, C = 2, H, W ≥ 1,
/// one strictly increasing timestamp per frame). The value-range invariant
/// 0 < v < 1 is checked separately by check_values() so that raw, pre-clip
/// products can still be loaded and clipped.
class RasterStack {
 public:
  RasterStack(TensorF data, std::vector<std::string> timestamps,
              std::vector<std::string> pol_names = {"VV", "VH"});

  const TensorF& data() const noexcept { return data_; }
  const std::vector<std::string>& timestamps() const noexcept { return timestamps_; }
  const std::vector<std::string>& pol_names() const noexcept { return pol_names_; }

  std::size_t steps() const { return data_.dim(0); }
  std::size_t channels() const { return data_.dim(1); }
  std::size_t height() const { return data_.dim(2); }
  std::size_t width() const { return data_.dim(3); }

  float at(std::size_t t, std::size_t c, std::size_t row, std::size_t col) const {
    return data_(t, c, row, col);
  }

  /// Throws ValidationError unless every value is finite and in (0, 1).
  void check_values() const;

  /// Frames [first, last) as a new stack. Requires last - first ≥ 2.
  RasterStack frames(std::size_t first, std::size_t last) const;
  /// One frame as a C×H×W float tensor.
  TensorF frame(std::size_t t) const;

  friend bool operator==(const RasterStack&, const RasterStack&) = default;

 private:
  TensorF data_;
  std::vector<std::string> timestamps_;
  std::vector<std::string> pol_names_;
};

/// Per-pixel Gaussian forecast in logit space; mu and sigma are C×H×W.
struct DistributionEstimate {
  TensorD mu;
  TensorD sigma;

  /// Throws unless shapes agree, mu is finite and sigma is strictly positive.
  void validate() const;
};

enum class MetricUnits { standard_deviations, decibels };

const char* to_string(MetricUnits units);
MetricUnits metric_units_from_string(const std::string& name);

/// Nonnegative per-pixel disturbance score, H×W.
struct DisturbanceMap {
  TensorD values;
  MetricUnits units = MetricUnits::standard_deviations;

  std::size_t height() const { return values.dim(0); }
  std::size_t width() const { return values.dim(1); }
  void validate() const;
};

/// Thresholded disturbance map: mask(i, j) = metric(i, j) > tau.
struct BinaryDelineation {
  Mask mask;
  double tau = 0.0;
  MetricUnits units = MetricUnits::standard_deviations;

  std::size_t positives() const;
};

// ---------------------------------------------------------------------------
// RTS container
//
//   bytes 0-3    magic "RTS0"
//   bytes 4-7    uint32 little-endian header length N
//   bytes 8..8+N UTF-8 JSON header {shape, dtype:"f32le", order:"TCHW",
//                timestamps, pol_names, [extension keys]}
//   then         T*C*H*W little-endian float32 values in C order
// ---------------------------------------------------------------------------

/// Raw contents of an RTS file before any stack-level validation.
struct RtsContainer {
  TensorF data;  // rank 4
  std::vector<std::string> timestamps;
  std::vector<std::string> pol_names;
  /// Extra string-valued header keys (e.g. "units" for metric maps).
  std::map<std::string, std::string> extensions;
};

struct RtsReadOptions {
  /// Accept finite values outside (0, 1), for data that has not been clipped yet.
  bool allow_raw = false;
};

/// Serializes a container. Output bytes depend only on the container contents.
std::vector<char> encode_rts(const RtsContainer& container);
RtsContainer decode_rts(const std::vector<char>& bytes);

void write_rts_container(const RtsContainer& container, const std::filesystem::path& path);
RtsContainer read_rts_container(const std::filesystem::path& path);

void write_rts(const RasterStack& stack, const std::filesystem::path& path);
RasterStack read_rts(const std::filesystem::path& path, RtsReadOptions options = {});

/// Truth masks and metric maps share the container with shape [1, 1, H, W].
void write_mask(const Mask& mask, const std::filesystem::path& path);
Mask read_mask(const std::filesystem::path& path);
void write_metric(const DisturbanceMap& metric, const std::filesystem::path& path);
DisturbanceMap read_metric(const std::filesystem::path& path);
/// Estimates are stored as two [1, C, H, W] containers.
void write_estimate(const DistributionEstimate& est, const std::filesystem::path& mu_path,
                    const std::filesystem::path& sigma_path);
DistributionEstimate read_estimate(const std::filesystem::path& mu_path,
                                   const std::filesystem::path& sigma_path);

/// Copies the size×size spatial window with top-left corner (row0, col0).
RasterStack slice_window(const RasterStack& stack, std::size_t row0, std::size_t col0,
                         std::size_t size);

/// Timestamps for `count` acquisitions on a fixed revisit, ISO-8601 dates.
std::vector<std::string> revisit_timestamps(std::size_t count, int year = 2023,
                                            unsigned month = 1, unsigned day = 1,
                                            int interval_days = 12);

}  // namespace sardist
