#include "sardist/raster_store.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace sardist {

namespace {

constexpr char kMagic[4] = {'R', 'T', 'S', '0'};

char* put_u32(char* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) *out++ = static_cast<char>((v >> (8 * i)) & 0xFFu);
  return out;
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

void check_frame_shape(const std::vector<std::size_t>& dims) {
  if (dims.size() != 4) throw FormatError("rts: shape must have 4 entries [T,C,H,W]");
}

RasterStack stack_from_container(RtsContainer c) {
  try {
    return RasterStack(std::move(c.data), std::move(c.timestamps), std::move(c.pol_names));
  } catch (const ValidationError& e) {
    throw FormatError(std::string("rts: header/shape mismatch: ") + e.what());
  }
}

}  // namespace

std::string shape_string(const std::vector<std::size_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

RasterStack::RasterStack(TensorF data, std::vector<std::string> timestamps,
                         std::vector<std::string> pol_names)
    : data_(std::move(data)), timestamps_(std::move(timestamps)), pol_names_(std::move(pol_names)) {
  if (data_.rank() != 4) throw ValidationError("raster stack must be rank 4 (T,C,H,W)");
  if (steps() < 2) throw ValidationError("raster stack needs at least 2 acquisitions");
  if (channels() != 2) throw ValidationError("raster stack must have exactly 2 polarizations");
  if (height() < 1 || width() < 1) throw ValidationError("raster stack has an empty raster");
  if (timestamps_.size() != steps()) {
    throw ValidationError("raster stack: " + std::to_string(timestamps_.size()) +
                          " timestamps for " + std::to_string(steps()) + " frames");
  }
  for (std::size_t i = 1; i < timestamps_.size(); ++i) {
    if (!(timestamps_[i - 1] < timestamps_[i])) {
      throw ValidationError("raster stack: timestamps not strictly increasing at " + timestamps_[i]);
    }
  }
  if (pol_names_.size() != channels()) throw ValidationError("raster stack: pol_names/channel mismatch");
}

void RasterStack::check_values() const {
  const auto v = data_.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i]) || !(v[i] > 0.0f) || !(v[i] < 1.0f)) {
      throw ValidationError("raster stack: value " + std::to_string(v[i]) + " at flat index " +
                            std::to_string(i) + " outside (0,1)");
    }
  }
}

RasterStack RasterStack::frames(std::size_t first, std::size_t last) const {
  if (first >= last || last > steps()) throw BoundsError("raster stack: frame range out of bounds");
  const std::size_t per = data_.stride(0);
  std::vector<float> out(data_.data() + first * per, data_.data() + last * per);
  return RasterStack(TensorF({last - first, channels(), height(), width()}, std::move(out)),
                     {timestamps_.begin() + first, timestamps_.begin() + last}, pol_names_);
}

TensorF RasterStack::frame(std::size_t t) const {
  if (t >= steps()) throw BoundsError("raster stack: frame index out of bounds");
  const std::size_t per = data_.stride(0);
  return TensorF({channels(), height(), width()},
                 std::vector<float>(data_.data() + t * per, data_.data() + (t + 1) * per));
}

void DistributionEstimate::validate() const {
  if (mu.dims() != sigma.dims() || mu.rank() != 3) throw ShapeError("estimate: mu/sigma must both be C×H×W");
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!std::isfinite(mu[i])) throw NumericError("estimate: non-finite mu");
    if (!(sigma[i] > 0.0) || !std::isfinite(sigma[i])) throw NumericError("estimate: sigma must be positive");
  }
}

const char* to_string(MetricUnits units) {
  return units == MetricUnits::decibels ? "decibels" : "standard_deviations";
}

MetricUnits metric_units_from_string(const std::string& name) {
  if (name == "decibels") return MetricUnits::decibels;
  if (name == "standard_deviations") return MetricUnits::standard_deviations;
  throw FormatError("unknown metric units '" + name + "'");
}

void DisturbanceMap::validate() const {
  if (values.rank() != 2) throw ShapeError("disturbance map must be H×W");
  for (double v : values.values()) {
    if (!std::isfinite(v) || v < 0.0) throw ValidationError("disturbance map values must be finite and ≥ 0");
  }
}

std::size_t BinaryDelineation::positives() const {
  std::size_t n = 0;
  for (auto b : mask.values()) n += b ? 1 : 0;
  return n;
}

std::vector<char> encode_rts(const RtsContainer& c) {
  check_frame_shape(c.data.dims());
  nlohmann::json header;
  header["shape"] = c.data.dims();
  header["dtype"] = "f32le";
  header["order"] = "TCHW";
  header["timestamps"] = c.timestamps;
  header["pol_names"] = c.pol_names;
  for (const auto& [key, value] : c.extensions) {
    if (header.contains(key)) throw ValidationError("rts: extension key '" + key + "' is reserved");
    header[key] = value;
  }
  const std::string text = header.dump();

  std::vector<char> out(8 + text.size() + 4 * c.data.size());
  char* p = std::copy(std::begin(kMagic), std::end(kMagic), out.data());
  p = put_u32(p, static_cast<std::uint32_t>(text.size()));
  p = std::copy(text.begin(), text.end(), p);
  for (float v : c.data.values()) p = put_u32(p, std::bit_cast<std::uint32_t>(v));
  return out;
}

RtsContainer decode_rts(const std::vector<char>& bytes) {
  if (bytes.size() < 8 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError("rts: bad magic");
  }
  const std::uint64_t header_len = get_u32(bytes.data() + 4);
  if (8 + header_len > bytes.size()) throw FormatError("rts: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("rts: header is not valid JSON: ") + e.what());
  }

  RtsContainer c;
  std::vector<std::size_t> dims;
  try {
    if (header.at("dtype").get<std::string>() != "f32le") throw FormatError("rts: dtype must be f32le");
    if (header.at("order").get<std::string>() != "TCHW") throw FormatError("rts: order must be TCHW");
    dims = header.at("shape").get<std::vector<std::size_t>>();
    c.timestamps = header.at("timestamps").get<std::vector<std::string>>();
    c.pol_names = header.at("pol_names").get<std::vector<std::string>>();
    for (const auto& [key, value] : header.items()) {
      if (key == "shape" || key == "dtype" || key == "order" || key == "timestamps" || key == "pol_names") continue;
      if (value.is_string()) c.extensions[key] = value.get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("rts: malformed header: ") + e.what());
  }
  check_frame_shape(dims);
  if (!c.timestamps.empty() && c.timestamps.size() != dims[0]) throw FormatError("rts: timestamps/shape mismatch");
  if (!c.pol_names.empty() && c.pol_names.size() != dims[1]) throw FormatError("rts: pol_names/shape mismatch");

  const std::uint64_t count = TensorF::element_count(dims);
  const std::uint64_t payload = bytes.size() - 8 - header_len;
  if (payload < 4 * count) throw FormatError("rts: truncated payload");
  if (payload > 4 * count) throw FormatError("rts: trailing bytes after payload");

  std::vector<float> values(count);
  const char* p = bytes.data() + 8 + header_len;
  for (std::uint64_t i = 0; i < count; ++i) values[i] = std::bit_cast<float>(get_u32(p + 4 * i));
  c.data = TensorF(std::move(dims), std::move(values));
  return c;
}

void write_rts_container(const RtsContainer& container, const std::filesystem::path& path) {
  const auto bytes = encode_rts(container);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw StorageError("write failed for '" + path.string() + "'");
}

RtsContainer read_rts_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw StorageError("read failed for '" + path.string() + "'");
  return decode_rts(bytes);
}

void write_rts(const RasterStack& stack, const std::filesystem::path& path) {
  stack.check_values();
  write_rts_container({stack.data(), stack.timestamps(), stack.pol_names(), {}}, path);
}

RasterStack read_rts(const std::filesystem::path& path, RtsReadOptions options) {
  RasterStack stack = stack_from_container(read_rts_container(path));
  if (options.allow_raw) {
    for (float v : stack.data().values()) {
      if (!std::isfinite(v)) throw ValidationError("rts: non-finite value in '" + path.string() + "'");
    }
  } else {
    stack.check_values();
  }
  return stack;
}

void write_mask(const Mask& mask, const std::filesystem::path& path) {
  if (mask.rank() != 2) throw ShapeError("mask must be H×W");
  RtsContainer c;
  c.data = TensorF({1, 1, mask.dim(0), mask.dim(1)});
  for (std::size_t i = 0; i < mask.size(); ++i) c.data[i] = mask[i] ? 1.0f : 0.0f;
  write_rts_container(c, path);
}

Mask read_mask(const std::filesystem::path& path) {
  const RtsContainer c = read_rts_container(path);
  if (c.data.dim(0) != 1 || c.data.dim(1) != 1) throw FormatError("mask container must have shape [1,1,H,W]");
  Mask mask({c.data.dim(2), c.data.dim(3)});
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const float v = c.data[i];
    if (v != 0.0f && v != 1.0f) throw FormatError("mask values must be 0.0 or 1.0");
    mask[i] = v == 1.0f ? 1 : 0;
  }
  return mask;
}

void write_metric(const DisturbanceMap& metric, const std::filesystem::path& path) {
  metric.validate();
  RtsContainer c;
  c.data = TensorF({1, 1, metric.height(), metric.width()});
  for (std::size_t i = 0; i < metric.values.size(); ++i) c.data[i] = static_cast<float>(metric.values[i]);
  c.extensions["units"] = to_string(metric.units);
  write_rts_container(c, path);
}

DisturbanceMap read_metric(const std::filesystem::path& path) {
  const RtsContainer c = read_rts_container(path);
  if (c.data.dim(0) != 1 || c.data.dim(1) != 1) throw FormatError("metric container must have shape [1,1,H,W]");
  DisturbanceMap m;
  m.values = TensorD({c.data.dim(2), c.data.dim(3)});
  for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = c.data[i];
  const auto it = c.extensions.find("units");
  m.units = it == c.extensions.end() ? MetricUnits::standard_deviations : metric_units_from_string(it->second);
  m.validate();
  return m;
}

void write_estimate(const DistributionEstimate& est, const std::filesystem::path& mu_path,
                    const std::filesystem::path& sigma_path) {
  est.validate();
  auto to_container = [](const TensorD& t) {
    RtsContainer c;
    c.data = TensorF({1, t.dim(0), t.dim(1), t.dim(2)});
    for (std::size_t i = 0; i < t.size(); ++i) c.data[i] = static_cast<float>(t[i]);
    c.extensions["space"] = "logit";
    return c;
  };
  write_rts_container(to_container(est.mu), mu_path);
  write_rts_container(to_container(est.sigma), sigma_path);
}

DistributionEstimate read_estimate(const std::filesystem::path& mu_path,
                                   const std::filesystem::path& sigma_path) {
  auto from_container = [](const RtsContainer& c) {
    if (c.data.dim(0) != 1) throw FormatError("estimate container must have shape [1,C,H,W]");
    TensorD t({c.data.dim(1), c.data.dim(2), c.data.dim(3)});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = c.data[i];
    return t;
  };
  DistributionEstimate est{from_container(read_rts_container(mu_path)),
                           from_container(read_rts_container(sigma_path))};
  est.validate();
  return est;
}

RasterStack slice_window(const RasterStack& stack, std::size_t row0, std::size_t col0, std::size_t size) {
  if (size == 0 || row0 + size > stack.height() || col0 + size > stack.width()) {
    throw BoundsError("slice_window: window " + std::to_string(size) + " at (" + std::to_string(row0) + "," +
                      std::to_string(col0) + ") exceeds " + std::to_string(stack.height()) + "x" +
                      std::to_string(stack.width()));
  }
  const std::size_t T = stack.steps(), C = stack.channels();
  TensorF out({T, C, size, size});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < size; ++i)
        for (std::size_t j = 0; j < size; ++j) out(t, c, i, j) = stack.at(t, c, row0 + i, col0 + j);
  return RasterStack(std::move(out), stack.timestamps(), stack.pol_names());
}

std::vector<std::string> revisit_timestamps(std::size_t count, int year, unsigned month, unsigned day,
                                            int interval_days) {
  using namespace std::chrono;
  std::vector<std::string> out;
  sys_days d = std::chrono::year{year} / std::chrono::month{month} / std::chrono::day{day};
  for (std::size_t i = 0; i < count; ++i) {
    const year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    out.emplace_back(buf);
    d += days{interval_days};
  }
  return out;
}

}  // namespace sardist
