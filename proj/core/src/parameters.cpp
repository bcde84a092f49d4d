#include <cmath>

#include "nn_ops.hpp"
#include "sardist/model.hpp"

namespace sardist {

const char* to_string(ModelKind kind) { return kind == ModelKind::gru ? "gru" : "transformer"; }

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "transformer") return ModelKind::transformer;
  if (name == "gru") return ModelKind::gru;
  throw ValidationError("unknown model kind '" + name + "'");
}

ModelConfig ModelConfig::transformer_default() { return {}; }

ModelConfig ModelConfig::gru_default() {
  ModelConfig cfg;
  cfg.kind = ModelKind::gru;
  cfg.input_size = 8;
  cfg.patch_size = 8;
  cfg.d_model = 326;
  cfg.head_hidden = 978;
  return cfg;
}

ModelConfig ModelConfig::transformer_preset(std::size_t ff, std::size_t layers) {
  ModelConfig cfg;
  cfg.ff_dim = ff;
  cfg.head_hidden = ff;
  cfg.num_layers = layers;
  return cfg;
}

void ModelConfig::validate() const {
  if (channels < 1) throw ValidationError("model: channels must be ≥ 1");
  if (input_size < 1 || d_model < 1 || num_layers < 1 || head_hidden < 1) {
    throw ValidationError("model: sizes must be positive");
  }
  if (kind == ModelKind::transformer) {
    if (patch_size < 1 || input_size % patch_size != 0) {
      throw ValidationError("model: input_size must be divisible by patch_size");
    }
    if (num_heads < 1 || d_model % num_heads != 0) throw ValidationError("model: d_model must be divisible by num_heads");
    if (ff_dim < 1) throw ValidationError("model: ff_dim must be ≥ 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("model: dropout must lie in [0,1)");
  if (max_T < 2) throw ValidationError("model: max_T must be ≥ 2");
  if (!(sigma_floor > 0.0)) throw ValidationError("model: sigma_floor must be > 0");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"kind", to_string(c.kind)}, {"channels", c.channels},     {"input_size", c.input_size},
          {"patch_size", c.patch_size}, {"d_model", c.d_model},      {"num_heads", c.num_heads},
          {"num_layers", c.num_layers}, {"ff_dim", c.ff_dim},        {"head_hidden", c.head_hidden},
          {"dropout", c.dropout},       {"max_T", c.max_T},          {"sigma_floor", c.sigma_floor}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
  try {
    if (j.contains("kind")) c.kind = model_kind_from_string(j["kind"].get<std::string>());
    auto read = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    read("channels", c.channels);
    read("input_size", c.input_size);
    read("patch_size", c.patch_size);
    read("d_model", c.d_model);
    read("num_heads", c.num_heads);
    read("num_layers", c.num_layers);
    read("ff_dim", c.ff_dim);
    read("head_hidden", c.head_hidden);
    read("dropout", c.dropout);
    read("max_T", c.max_T);
    read("sigma_floor", c.sigma_floor);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
  return c;
}

const ParamSpec& ParameterLayout::add(std::string name, std::vector<std::size_t> dims, ParamSpec::Init init,
                                      std::size_t fan_in) {
  ParamSpec spec;
  spec.size = TensorD::element_count(dims);
  spec.name = std::move(name);
  spec.dims = std::move(dims);
  spec.offset = total_;
  spec.init = init;
  spec.fan_in = fan_in;
  total_ += spec.size;
  specs_.push_back(std::move(spec));
  return specs_.back();
}

const ParamSpec& ParameterLayout::find(const std::string& name) const {
  for (const auto& s : specs_)
    if (s.name == name) return s;
  throw ContractError("no parameter named '" + name + "'");
}

namespace {

void add_linear(ParameterLayout& layout, const std::string& prefix, std::size_t in, std::size_t out) {
  layout.add(prefix + ".weight", {in, out}, ParamSpec::Init::uniform_fan_in, in);
  layout.add(prefix + ".bias", {out}, ParamSpec::Init::uniform_fan_in, in);
}

void add_norm(ParameterLayout& layout, const std::string& prefix, std::size_t width) {
  layout.add(prefix + ".gain", {width}, ParamSpec::Init::ones);
  layout.add(prefix + ".shift", {width}, ParamSpec::Init::zeros);
}

}  // namespace

ParameterLayout build_layout(const ModelConfig& cfg) {
  cfg.validate();
  ParameterLayout layout;
  const std::size_t d = cfg.d_model, pv = cfg.patch_values();
  if (cfg.kind == ModelKind::transformer) {
    add_linear(layout, "patch_embed", pv, d);
    layout.add("spatial_embed", {cfg.num_patches(), d}, ParamSpec::Init::normal);
    layout.add("temporal_embed", {cfg.max_T, d}, ParamSpec::Init::normal);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      const std::string p = "blocks." + std::to_string(l);
      add_norm(layout, p + ".norm1", d);
      add_linear(layout, p + ".attn.qkv", d, 3 * d);
      add_linear(layout, p + ".attn.out", d, d);
      add_norm(layout, p + ".norm2", d);
      add_linear(layout, p + ".ff.fc1", d, cfg.ff_dim);
      add_linear(layout, p + ".ff.fc2", cfg.ff_dim, d);
    }
    add_norm(layout, "final_norm", d);
  } else {
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      const std::string p = "gru." + std::to_string(l);
      const std::size_t in = l == 0 ? pv : d;
      add_linear(layout, p + ".input", in, 3 * d);
      add_linear(layout, p + ".hidden", d, 3 * d);
    }
  }
  for (const char* head : {"mu_head", "sigma_head"}) {
    add_linear(layout, std::string(head) + ".fc1", d, cfg.head_hidden);
    add_linear(layout, std::string(head) + ".fc2", cfg.head_hidden, pv);
  }
  return layout;
}

std::size_t parameter_count(const ModelConfig& cfg) { return build_layout(cfg).total(); }

void initialize_parameters(const ParameterLayout& layout, std::span<double> params, std::uint64_t seed) {
  if (params.size() != layout.total()) throw ShapeError("initialize: parameter vector size mismatch");
  std::mt19937_64 rng(seed);
  for (const auto& spec : layout.specs()) {
    auto slot = params.subspan(spec.offset, spec.size);
    switch (spec.init) {
      case ParamSpec::Init::uniform_fan_in: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (double& v : slot) v = u(rng);
        break;
      }
      case ParamSpec::Init::normal: {
        std::normal_distribution<double> n(0.0, 0.02);
        for (double& v : slot) v = n(rng);
        break;
      }
      case ParamSpec::Init::ones:
        for (double& v : slot) v = 1.0;
        break;
      case ParamSpec::Init::zeros:
        for (double& v : slot) v = 0.0;
        break;
    }
  }
}

TensorD extract_patches(const TensorD& window, std::size_t P) {
  if (window.rank() != 4 || window.dim(2) != window.dim(3)) throw ShapeError("extract_patches: window must be T×C×S×S");
  const std::size_t T = window.dim(0), C = window.dim(1), S = window.dim(2);
  if (P == 0 || S % P != 0) throw ShapeError("extract_patches: size not divisible by patch");
  const std::size_t g = S / P;
  TensorD out({T * g * g, C * P * P});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t pr = 0; pr < g; ++pr)
      for (std::size_t pc = 0; pc < g; ++pc) {
        const std::size_t token = (t * g + pr) * g + pc;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t y = 0; y < P; ++y)
            for (std::size_t x = 0; x < P; ++x) out(token, (c * P + y) * P + x) = window(t, c, pr * P + y, pc * P + x);
      }
  return out;
}

TensorD assemble_patches(const TensorD& patches, std::size_t C, std::size_t S, std::size_t P) {
  if (P == 0 || S % P != 0) throw ShapeError("assemble_patches: size not divisible by patch");
  const std::size_t g = S / P;
  if (patches.rank() != 2 || patches.dim(1) != C * P * P || patches.dim(0) % (g * g) != 0) {
    throw ShapeError("assemble_patches: patch tensor has shape " + shape_string(patches.dims()));
  }
  const std::size_t T = patches.dim(0) / (g * g);
  TensorD out({T, C, S, S});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t pr = 0; pr < g; ++pr)
      for (std::size_t pc = 0; pc < g; ++pc) {
        const std::size_t token = (t * g + pr) * g + pc;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t y = 0; y < P; ++y)
            for (std::size_t x = 0; x < P; ++x) out(t, c, pr * P + y, pc * P + x) = patches(token, (c * P + y) * P + x);
      }
  return out;
}

TensorD attention(const TensorD& q, const TensorD& k, const TensorD& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0)) {
    throw ShapeError("attention: inconsistent Q/K/V shapes");
  }
  const auto n = static_cast<nn::Index>(q.dim(0)), m = static_cast<nn::Index>(k.dim(0));
  const auto dk = static_cast<nn::Index>(q.dim(1)), dv = static_cast<nn::Index>(v.dim(1));
  nn::Mat scores = nn::CMap(q.data(), n, dk) * nn::CMap(k.data(), m, dk).transpose();
  scores /= std::sqrt(static_cast<double>(dk));
  nn::softmax_rows(scores);
  nn::Mat out = scores * nn::CMap(v.data(), m, dv);
  return TensorD({q.dim(0), v.dim(1)}, std::vector<double>(out.data(), out.data() + out.size()));
}

}  // namespace sardist
