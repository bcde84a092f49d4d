#pragma once

// Dense building blocks with hand-written backward passes. Weight matrices
// are stored input-major (in × out) so a layer is Y = X·W + b.

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <random>

namespace sardist::nn {

using Index = Eigen::Index;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using CMap = Eigen::Map<const Mat>;
using MMap = Eigen::Map<Mat>;
using CVecMap = Eigen::Map<const RowVec>;
using MVecMap = Eigen::Map<RowVec>;

/// Offsets of a linear layer inside the flat parameter vector.
struct LinearRef {
  std::size_t weight = 0;
  std::size_t bias = 0;
  Index in = 0;
  Index out = 0;
};

inline CMap weight(const double* p, const LinearRef& l) { return CMap(p + l.weight, l.in, l.out); }
inline CVecMap bias(const double* p, const LinearRef& l) { return CVecMap(p + l.bias, l.out); }

inline Mat linear(const double* p, const LinearRef& l, const Mat& x) {
  Mat y(x.rows(), l.out);
  y.noalias() = x * weight(p, l);
  y.rowwise() += bias(p, l);
  return y;
}

/// Accumulates weight/bias gradients; returns dX.
inline Mat linear_backward(const double* p, double* g, const LinearRef& l, const Mat& x, const Mat& dy) {
  MMap(g + l.weight, l.in, l.out).noalias() += x.transpose() * dy;
  MVecMap(g + l.bias, l.out) += dy.colwise().sum();
  Mat dx(dy.rows(), l.in);
  dx.noalias() = dy * weight(p, l).transpose();
  return dx;
}

/// Same as linear_backward without the input gradient.
inline void linear_backward_params(double* g, const LinearRef& l, const Mat& x, const Mat& dy) {
  MMap(g + l.weight, l.in, l.out).noalias() += x.transpose() * dy;
  MVecMap(g + l.bias, l.out) += dy.colwise().sum();
}

struct NormRef {
  std::size_t gain = 0;
  std::size_t shift = 0;
  Index width = 0;
};

struct NormCache {
  Mat xhat;
  Eigen::VectorXd inv_std;
};

constexpr double kNormEps = 1e-5;

inline Mat layer_norm(const double* p, const NormRef& n, const Mat& x, NormCache& cache) {
  const Index rows = x.rows(), w = x.cols();
  cache.xhat.resize(rows, w);
  cache.inv_std.resize(rows);
  for (Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + kNormEps);
    cache.inv_std(r) = inv;
    cache.xhat.row(r) = (x.row(r).array() - mean) * inv;
  }
  Mat y = cache.xhat.array().rowwise() * CVecMap(p + n.gain, w).array();
  y.rowwise() += CVecMap(p + n.shift, w);
  return y;
}

inline Mat layer_norm_backward(const double* p, double* g, const NormRef& n, const NormCache& cache,
                               const Mat& dy) {
  const Index rows = dy.rows(), w = dy.cols();
  MVecMap(g + n.gain, w) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  MVecMap(g + n.shift, w) += dy.colwise().sum();
  Mat dxhat = dy.array().rowwise() * CVecMap(p + n.gain, w).array();
  Mat dx(rows, w);
  for (Index r = 0; r < rows; ++r) {
    const double mean_d = dxhat.row(r).mean();
    const double mean_dx = dxhat.row(r).dot(cache.xhat.row(r)) / static_cast<double>(w);
    dx.row(r) = cache.inv_std(r) * (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

/// In-place row softmax with row-max subtraction.
inline void softmax_rows(Mat& s) {
  for (Index r = 0; r < s.rows(); ++r) {
    const double m = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - m).exp().matrix();
    s.row(r) /= s.row(r).sum();
  }
}

/// Inverted-dropout scale mask: entries are 0 or 1/(1-rate). Empty when inactive.
inline Mat dropout_mask(Index rows, Index cols, double rate, std::mt19937_64* rng) {
  if (rate <= 0.0 || rng == nullptr) return {};
  Mat m(rows, cols);
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = keep(*rng) ? scale : 0.0;
  return m;
}

inline void apply_mask(Mat& x, const Mat& mask) {
  if (mask.size() != 0) x.array() *= mask.array();
}

inline double softplus(double s) { return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }
inline double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

}  // namespace sardist::nn
