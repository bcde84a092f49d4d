#include "network.hpp"

namespace sardist::detail {

namespace {

using nn::Index;
using nn::Mat;

struct LayerRef {
  nn::LinearRef input;   // in × 3h, gate columns ordered reset | update | candidate
  nn::LinearRef hidden;  // h × 3h
};

struct LayerCache {
  Mat x;        // T × in (after dropout of the layer below)
  Mat gates_h;  // T × 3h, hidden contribution per step
  Mat r, z, n;  // T × h
  Mat h;        // (T+1) × h, row 0 is the zero initial state
  Mat drop;     // dropout applied to this layer's outputs before the next layer
};

struct GruState : Network::TrunkState {
  std::vector<LayerCache> layers;
};

class Gru final : public Network {
 public:
  Gru(const ModelConfig& cfg, const ParameterLayout& layout) : Network(cfg, layout) {
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      const std::string p = "gru." + std::to_string(l);
      layers_.push_back({linear_ref(layout, p + ".input"), linear_ref(layout, p + ".hidden")});
    }
  }

 protected:
  Mat trunk_forward(const double* p, const TensorD& window, Mode mode, std::mt19937_64* rng,
                    std::unique_ptr<TrunkState>& state_out) const override {
    auto state = std::make_unique<GruState>();
    const auto T = static_cast<Index>(window.dim(0));
    const auto h = static_cast<Index>(cfg_.d_model);
    const double rate = mode == Mode::train ? cfg_.dropout : 0.0;

    Mat x = nn::CMap(window.data(), T, static_cast<Index>(window.size() / window.dim(0)));
    state->layers.resize(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const LayerRef& ref = layers_[l];
      LayerCache& c = state->layers[l];
      c.x = std::move(x);
      const Mat gi = nn::linear(p, ref.input, c.x);
      c.gates_h.resize(T, 3 * h);
      c.r.resize(T, h);
      c.z.resize(T, h);
      c.n.resize(T, h);
      c.h = Mat::Zero(T + 1, h);
      const auto w_hh = nn::weight(p, ref.hidden);
      const auto b_hh = nn::bias(p, ref.hidden);
      for (Index t = 0; t < T; ++t) {
        c.gates_h.row(t).noalias() = c.h.row(t) * w_hh;
        c.gates_h.row(t) += b_hh;
        for (Index k = 0; k < h; ++k) {
          const double r = nn::sigmoid(gi(t, k) + c.gates_h(t, k));
          const double z = nn::sigmoid(gi(t, h + k) + c.gates_h(t, h + k));
          const double n = std::tanh(gi(t, 2 * h + k) + r * c.gates_h(t, 2 * h + k));
          c.r(t, k) = r;
          c.z(t, k) = z;
          c.n(t, k) = n;
          c.h(t + 1, k) = (1.0 - z) * n + z * c.h(t, k);
        }
      }
      x = c.h.bottomRows(T);
      if (l + 1 < layers_.size()) {
        c.drop = nn::dropout_mask(T, h, rate, rng);
        nn::apply_mask(x, c.drop);
      }
    }
    Mat features = x.bottomRows(1);
    state_out = std::move(state);
    return features;
  }

  void trunk_backward(const double* p, double* g, const TrunkState& base, const Mat& dfeatures) const override {
    const auto& state = static_cast<const GruState&>(base);
    const auto h = static_cast<Index>(cfg_.d_model);
    const Index T = state.layers.front().x.rows();
    Mat dout = Mat::Zero(T, h);
    dout.bottomRows(1) = dfeatures;

    for (std::size_t l = layers_.size(); l-- > 0;) {
      const LayerRef& ref = layers_[l];
      const LayerCache& c = state.layers[l];
      if (l + 1 < layers_.size()) nn::apply_mask(dout, c.drop);
      const auto w_hh = nn::weight(p, ref.hidden);
      Mat dgi(T, 3 * h), dgh(T, 3 * h);
      nn::RowVec dh_carry = nn::RowVec::Zero(h);
      for (Index t = T - 1; t >= 0; --t) {
        const nn::RowVec dh = dout.row(t) + dh_carry;
        for (Index k = 0; k < h; ++k) {
          const double r = c.r(t, k), z = c.z(t, k), n = c.n(t, k), hp = c.h(t, k);
          const double dz_pre = dh(k) * (hp - n) * z * (1.0 - z);
          const double dn_pre = dh(k) * (1.0 - z) * (1.0 - n * n);
          const double dr_pre = dn_pre * c.gates_h(t, 2 * h + k) * r * (1.0 - r);
          dgi(t, k) = dr_pre;
          dgi(t, h + k) = dz_pre;
          dgi(t, 2 * h + k) = dn_pre;
          dgh(t, k) = dr_pre;
          dgh(t, h + k) = dz_pre;
          dgh(t, 2 * h + k) = dn_pre * r;
        }
        dh_carry = dh.cwiseProduct(c.z.row(t));
        dh_carry.noalias() += dgh.row(t) * w_hh.transpose();
      }
      nn::linear_backward_params(g, ref.hidden, c.h.topRows(T), dgh);
      if (l == 0) {
        nn::linear_backward_params(g, ref.input, c.x, dgi);
      } else {
        dout = nn::linear_backward(p, g, ref.input, c.x, dgi);
      }
    }
  }

 private:
  std::vector<LayerRef> layers_;
};

}  // namespace

std::unique_ptr<Network> make_gru(const ModelConfig& cfg, const ParameterLayout& layout) {
  return std::make_unique<Gru>(cfg, layout);
}

}  // namespace sardist::detail
