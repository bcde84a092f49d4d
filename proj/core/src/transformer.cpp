#include <cmath>

#include "network.hpp"

namespace sardist::detail {

namespace {

using nn::Index;
using nn::Mat;

struct BlockRef {
  nn::NormRef norm1, norm2;
  nn::LinearRef qkv, out, fc1, fc2;
};

struct BlockCache {
  nn::NormCache norm1, norm2;
  Mat h1, qkv;
  std::vector<Mat> probs;  // per head
  Mat attn;                // concatenated head outputs
  Mat drop_attn;
  Mat h2, f1, act, drop_act, drop_ff;
};

struct TransformerState : Network::TrunkState {
  std::size_t steps = 0;
  Mat patches;
  std::vector<BlockCache> blocks;
  nn::NormCache final_norm;
};

class Transformer final : public Network {
 public:
  Transformer(const ModelConfig& cfg, const ParameterLayout& layout) : Network(cfg, layout) {
    embed_ = linear_ref(layout, "patch_embed");
    spatial_ = layout.find("spatial_embed").offset;
    temporal_ = layout.find("temporal_embed").offset;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      const std::string p = "blocks." + std::to_string(l);
      blocks_.push_back({norm_ref(layout, p + ".norm1"), norm_ref(layout, p + ".norm2"),
                         linear_ref(layout, p + ".attn.qkv"), linear_ref(layout, p + ".attn.out"),
                         linear_ref(layout, p + ".ff.fc1"), linear_ref(layout, p + ".ff.fc2")});
    }
    final_ = norm_ref(layout, "final_norm");
  }

 protected:
  Mat trunk_forward(const double* p, const TensorD& window, Mode mode, std::mt19937_64* rng,
                    std::unique_ptr<TrunkState>& state_out) const override {
    auto state = std::make_unique<TransformerState>();
    const std::size_t T = window.dim(0), np = cfg_.num_patches();
    const auto d = static_cast<Index>(cfg_.d_model);
    const TensorD raw = extract_patches(window, cfg_.patch_size);
    state->steps = T;
    state->patches = nn::CMap(raw.data(), static_cast<Index>(raw.dim(0)), static_cast<Index>(raw.dim(1)));

    Mat x = nn::linear(p, embed_, state->patches);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t s = 0; s < np; ++s) {
        const auto row = static_cast<Index>(t * np + s);
        x.row(row) += nn::CVecMap(p + spatial_ + s * cfg_.d_model, d) + nn::CVecMap(p + temporal_ + t * cfg_.d_model, d);
      }
    }

    const double rate = mode == Mode::train ? cfg_.dropout : 0.0;
    state->blocks.resize(blocks_.size());
    for (std::size_t l = 0; l < blocks_.size(); ++l) x = block_forward(p, blocks_[l], x, rate, rng, state->blocks[l]);

    Mat y = nn::layer_norm(p, final_, x, state->final_norm);
    Mat features = y.bottomRows(static_cast<Index>(np));
    state_out = std::move(state);
    return features;
  }

  void trunk_backward(const double* p, double* g, const TrunkState& base, const Mat& dfeatures) const override {
    const auto& state = static_cast<const TransformerState&>(base);
    const std::size_t T = state.steps, np = cfg_.num_patches();
    const auto d = static_cast<Index>(cfg_.d_model);
    Mat dy = Mat::Zero(static_cast<Index>(T * np), d);
    dy.bottomRows(static_cast<Index>(np)) = dfeatures;
    Mat dx = nn::layer_norm_backward(p, g, final_, state.final_norm, dy);
    for (std::size_t l = blocks_.size(); l-- > 0;) dx = block_backward(p, g, blocks_[l], state.blocks[l], dx);

    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t s = 0; s < np; ++s) {
        const auto row = static_cast<Index>(t * np + s);
        nn::MVecMap(g + spatial_ + s * cfg_.d_model, d) += dx.row(row);
        nn::MVecMap(g + temporal_ + t * cfg_.d_model, d) += dx.row(row);
      }
    }
    nn::linear_backward_params(g, embed_, state.patches, dx);
  }

 private:
  Mat block_forward(const double* p, const BlockRef& b, const Mat& x, double rate, std::mt19937_64* rng,
                    BlockCache& c) const {
    const Index n = x.rows(), d = x.cols();
    const auto heads = static_cast<Index>(cfg_.num_heads);
    const Index dk = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    c.h1 = nn::layer_norm(p, b.norm1, x, c.norm1);
    c.qkv = nn::linear(p, b.qkv, c.h1);
    c.attn.resize(n, d);
    c.probs.resize(static_cast<std::size_t>(heads));
    for (Index h = 0; h < heads; ++h) {
      Mat s = c.qkv.middleCols(h * dk, dk) * c.qkv.middleCols(d + h * dk, dk).transpose();
      s *= scale;
      nn::softmax_rows(s);
      c.attn.middleCols(h * dk, dk).noalias() = s * c.qkv.middleCols(2 * d + h * dk, dk);
      c.probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    Mat o = nn::linear(p, b.out, c.attn);
    c.drop_attn = nn::dropout_mask(n, d, rate, rng);
    nn::apply_mask(o, c.drop_attn);
    Mat x1 = x + o;

    c.h2 = nn::layer_norm(p, b.norm2, x1, c.norm2);
    c.f1 = nn::linear(p, b.fc1, c.h2);
    c.act = c.f1.cwiseMax(0.0);
    c.drop_act = nn::dropout_mask(n, b.fc1.out, rate, rng);
    nn::apply_mask(c.act, c.drop_act);
    Mat f2 = nn::linear(p, b.fc2, c.act);
    c.drop_ff = nn::dropout_mask(n, d, rate, rng);
    nn::apply_mask(f2, c.drop_ff);
    return x1 + f2;
  }

  Mat block_backward(const double* p, double* g, const BlockRef& b, const BlockCache& c, const Mat& dx2) const {
    const Index n = dx2.rows(), d = dx2.cols();
    const auto heads = static_cast<Index>(cfg_.num_heads);
    const Index dk = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    Mat df2 = dx2;
    nn::apply_mask(df2, c.drop_ff);
    Mat dact = nn::linear_backward(p, g, b.fc2, c.act, df2);
    nn::apply_mask(dact, c.drop_act);
    Mat df1 = (c.f1.array() > 0.0).select(dact, 0.0);
    Mat dh2 = nn::linear_backward(p, g, b.fc1, c.h2, df1);
    Mat dx1 = dx2 + nn::layer_norm_backward(p, g, b.norm2, c.norm2, dh2);

    Mat dout = dx1;
    nn::apply_mask(dout, c.drop_attn);
    Mat dattn = nn::linear_backward(p, g, b.out, c.attn, dout);
    Mat dqkv(n, 3 * d);
    for (Index h = 0; h < heads; ++h) {
      const Mat& prob = c.probs[static_cast<std::size_t>(h)];
      const auto dah = dattn.middleCols(h * dk, dk);
      Mat dprob = dah * c.qkv.middleCols(2 * d + h * dk, dk).transpose();
      dqkv.middleCols(2 * d + h * dk, dk).noalias() = prob.transpose() * dah;
      const Eigen::VectorXd row_dot = (dprob.array() * prob.array()).rowwise().sum();
      Mat ds = prob.array() * (dprob.colwise() - row_dot).array();
      ds *= scale;
      dqkv.middleCols(h * dk, dk).noalias() = ds * c.qkv.middleCols(d + h * dk, dk);
      dqkv.middleCols(d + h * dk, dk).noalias() = ds.transpose() * c.qkv.middleCols(h * dk, dk);
    }
    Mat dh1 = nn::linear_backward(p, g, b.qkv, c.h1, dqkv);
    return dx1 + nn::layer_norm_backward(p, g, b.norm1, c.norm1, dh1);
  }

  nn::LinearRef embed_;
  std::size_t spatial_ = 0;
  std::size_t temporal_ = 0;
  std::vector<BlockRef> blocks_;
  nn::NormRef final_;
};

}  // namespace

std::unique_ptr<Network> make_transformer(const ModelConfig& cfg, const ParameterLayout& layout) {
  return std::make_unique<Transformer>(cfg, layout);
}

}  // namespace sardist::detail
