#include <cmath>

#include "network.hpp"
#include "sardist/training.hpp"

namespace sardist {

namespace detail {

using nn::Index;
using nn::Mat;

HeadRef head_ref(const ParameterLayout& layout, const std::string& prefix) {
  return {linear_ref(layout, prefix + ".fc1"), linear_ref(layout, prefix + ".fc2")};
}

Mat head_forward(const double* p, const HeadRef& h, const Mat& x, HeadCache& cache) {
  cache.input = x;
  cache.pre = nn::linear(p, h.fc1, x);
  cache.act = cache.pre.cwiseMax(0.0);
  return nn::linear(p, h.fc2, cache.act);
}

Mat head_backward(const double* p, double* g, const HeadRef& h, const HeadCache& cache, const Mat& dy) {
  Mat dact = nn::linear_backward(p, g, h.fc2, cache.act, dy);
  Mat dpre = (cache.pre.array() > 0.0).select(dact, 0.0);
  return nn::linear_backward(p, g, h.fc1, cache.input, dpre);
}

void check_window(const ModelConfig& cfg, const TensorD& window) {
  if (window.rank() != 4 || window.dim(1) != cfg.channels || window.dim(2) != cfg.input_size ||
      window.dim(3) != cfg.input_size) {
    throw ShapeError("model: window shape " + shape_string(window.dims()) + " does not match T×" +
                     std::to_string(cfg.channels) + "×" + std::to_string(cfg.input_size) + "×" +
                     std::to_string(cfg.input_size));
  }
  const std::size_t T = window.dim(0);
  if (T < 2) throw ContractError("model: need at least 2 baseline frames, got " + std::to_string(T));
  if (cfg.kind == ModelKind::transformer && T > cfg.max_T) {
    throw ContractError("model: " + std::to_string(T) + " frames exceeds max_T=" + std::to_string(cfg.max_T));
  }
}

Network::Network(const ModelConfig& cfg, const ParameterLayout& layout)
    : cfg_(cfg), mu_head_(head_ref(layout, "mu_head")), sigma_head_(head_ref(layout, "sigma_head")) {}

double Network::run(const double* p, const TensorD& window, Mode mode, std::mt19937_64* rng,
                    DistributionEstimate& out, const TensorD* target, double* grad) const {
  check_window(cfg_, window);
  if (mode == Mode::train && cfg_.dropout > 0.0 && rng == nullptr) {
    throw ContractError("model: train mode requires a random generator for dropout");
  }
  std::unique_ptr<TrunkState> state;
  const Mat features = trunk_forward(p, window, mode, mode == Mode::train ? rng : nullptr, state);
  HeadCache mu_cache, sigma_cache;
  const Mat mu_raw = head_forward(p, mu_head_, features, mu_cache);
  const Mat s_raw = head_forward(p, sigma_head_, features, sigma_cache);

  const std::size_t C = cfg_.channels, S = cfg_.input_size, P = cfg_.output_patch();
  const auto rows = static_cast<std::size_t>(mu_raw.rows()), cols = static_cast<std::size_t>(mu_raw.cols());
  TensorD mu_patches({rows, cols}), sigma_patches({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double m = mu_raw(static_cast<Index>(i), static_cast<Index>(j));
      const double s = nn::softplus(s_raw(static_cast<Index>(i), static_cast<Index>(j))) + cfg_.sigma_floor;
      if (!std::isfinite(m) || !std::isfinite(s)) throw NumericError("model: non-finite activation in forecast");
      mu_patches(i, j) = m;
      sigma_patches(i, j) = s;
    }
  }
  out.mu = assemble_patches(mu_patches, C, S, P);
  out.sigma = assemble_patches(sigma_patches, C, S, P);
  out.mu = TensorD({C, S, S}, std::vector<double>(out.mu.values().begin(), out.mu.values().end()));
  out.sigma = TensorD({C, S, S}, std::vector<double>(out.sigma.values().begin(), out.sigma.values().end()));
  if (target == nullptr || grad == nullptr) return 0.0;

  TensorD dmu, dsigma;
  const double loss = nll_loss_gradient(out, *target, dmu, dsigma);
  const TensorD dmu_p = extract_patches(TensorD({1, C, S, S}, {dmu.values().begin(), dmu.values().end()}), P);
  const TensorD dsig_p = extract_patches(TensorD({1, C, S, S}, {dsigma.values().begin(), dsigma.values().end()}), P);
  Mat dmu_raw(static_cast<Index>(rows), static_cast<Index>(cols)), ds_raw(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const auto r = static_cast<Index>(i), c = static_cast<Index>(j);
      dmu_raw(r, c) = dmu_p(i, j);
      ds_raw(r, c) = dsig_p(i, j) * nn::sigmoid(s_raw(r, c));
    }
  }
  Mat dfeatures = head_backward(p, grad, mu_head_, mu_cache, dmu_raw);
  dfeatures += head_backward(p, grad, sigma_head_, sigma_cache, ds_raw);
  trunk_backward(p, grad, *state, dfeatures);
  return loss;
}

}  // namespace detail

namespace {

std::unique_ptr<detail::Network> make_network(const ModelConfig& cfg, const ParameterLayout& layout) {
  return cfg.kind == ModelKind::transformer ? detail::make_transformer(cfg, layout) : detail::make_gru(cfg, layout);
}

}  // namespace

Model::Model(ModelConfig cfg)
    : cfg_(std::move(cfg)), layout_(build_layout(cfg_)), params_(layout_.total(), 0.0), net_(make_network(cfg_, layout_)) {}

Model::Model(const Model& other)
    : cfg_(other.cfg_), layout_(other.layout_), params_(other.params_), net_(make_network(cfg_, layout_)) {}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    cfg_ = other.cfg_;
    layout_ = other.layout_;
    params_ = other.params_;
    net_ = make_network(cfg_, layout_);
  }
  return *this;
}

Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;
Model::~Model() = default;

Model Model::initialized(ModelConfig cfg, std::uint64_t seed) {
  Model m(std::move(cfg));
  m.initialize(seed);
  return m;
}

void Model::initialize(std::uint64_t seed) { initialize_parameters(layout_, params_, seed); }

std::span<double> Model::parameter(const std::string& name) {
  const auto& spec = layout_.find(name);
  return std::span<double>(params_).subspan(spec.offset, spec.size);
}

std::span<const double> Model::parameter(const std::string& name) const {
  const auto& spec = layout_.find(name);
  return std::span<const double>(params_).subspan(spec.offset, spec.size);
}

DistributionEstimate Model::forecast(const TensorD& window) const { return forward(window, Mode::eval); }

DistributionEstimate Model::forward(const TensorD& window, Mode mode, std::mt19937_64* rng) const {
  DistributionEstimate est;
  net_->run(params_.data(), window, mode, rng, est, nullptr, nullptr);
  return est;
}

double Model::loss_and_gradient(const TensorD& window, const TensorD& target, Mode mode, std::mt19937_64* rng,
                                std::span<double> grad) const {
  if (grad.size() != params_.size()) throw ShapeError("model: gradient buffer size mismatch");
  DistributionEstimate est;
  return net_->run(params_.data(), window, mode, rng, est, &target, grad.data());
}

TokenSequence Model::patchify(const TensorD& window) const {
  if (cfg_.kind != ModelKind::transformer) throw ContractError("patchify: only defined for the transformer");
  detail::check_window(cfg_, window);
  const TensorD raw = extract_patches(window, cfg_.patch_size);
  const std::size_t T = window.dim(0), g = cfg_.patches_per_side(), np = g * g, d = cfg_.d_model;
  const auto embed = detail::linear_ref(layout_, "patch_embed");
  const nn::Mat x = nn::linear(params_.data(), embed,
                               nn::CMap(raw.data(), static_cast<nn::Index>(raw.dim(0)), static_cast<nn::Index>(raw.dim(1))));
  const auto spatial = parameter("spatial_embed");
  const auto temporal = parameter("temporal_embed");
  TokenSequence seq;
  seq.tokens = TensorD({T * np, d});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < np; ++s) {
      const std::size_t tok = t * np + s;
      seq.patch_row.push_back(s / g);
      seq.patch_col.push_back(s % g);
      seq.time_step.push_back(t);
      for (std::size_t k = 0; k < d; ++k) {
        seq.tokens(tok, k) = x(static_cast<nn::Index>(tok), static_cast<nn::Index>(k)) + (spatial[s * d + k] + temporal[t * d + k]);
      }
    }
  }
  return seq;
}

}  // namespace sardist
