#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sardist/aligned.hpp"
#include "sardist/errors.hpp"

namespace sardist {

/// Dense row-major tensor with value semantics.
template <class Scalar>
class Tensor {
 public:
  using value_type = Scalar;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> dims, Scalar fill = Scalar{})
      : dims_(std::move(dims)), values_(element_count(dims_), fill) {}

  Tensor(std::vector<std::size_t> dims, std::vector<Scalar> values)
      : dims_(std::move(dims)), values_(values.begin(), values.end()) {
    if (values_.size() != element_count(dims_)) {
      throw ShapeError("tensor: value count " + std::to_string(values_.size()) +
                       " does not match shape (" + std::to_string(element_count(dims_)) + ")");
    }
  }

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::span<Scalar> values() noexcept { return values_; }
  std::span<const Scalar> values() const noexcept { return values_; }
  Scalar* data() noexcept { return values_.data(); }
  const Scalar* data() const noexcept { return values_.data(); }

  Scalar& operator[](std::size_t flat) { return values_[flat]; }
  const Scalar& operator[](std::size_t flat) const { return values_[flat]; }

  template <class... Index>
  Scalar& operator()(Index... idx) {
    return values_[offset(idx...)];
  }
  template <class... Index>
  const Scalar& operator()(Index... idx) const {
    return values_[offset(idx...)];
  }

  template <class... Index>
  std::size_t offset(Index... idx) const {
    const std::array<std::size_t, sizeof...(Index)> index{static_cast<std::size_t>(idx)...};
    std::size_t flat = 0;
    for (std::size_t axis = 0; axis < index.size(); ++axis) flat = flat * dims_[axis] + index[axis];
    return flat;
  }

  /// Elements per step along `axis` (product of trailing extents).
  std::size_t stride(std::size_t axis) const {
    std::size_t s = 1;
    for (std::size_t a = axis + 1; a < dims_.size(); ++a) s *= dims_[a];
    return s;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.values_ == b.values_;
  }

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
  }

 private:
  std::vector<std::size_t> dims_;
  AlignedVector<Scalar> values_;
};

using TensorD = Tensor<double>;
using TensorF = Tensor<float>;
/// Boolean H×W raster stored as 0/1 bytes.
using Mask = Tensor<std::uint8_t>;

std::string shape_string(const std::vector<std::size_t>& dims);

template <class To, class From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
  std::vector<To> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<To>(src[i]);
  return Tensor<To>(src.dims(), std::move(out));
}

}  // namespace sardist
