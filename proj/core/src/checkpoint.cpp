#include "sardist/checkpoint.hpp"

#include <fstream>

#include "json.hpp"

namespace sardist {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StorageError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw StorageError("write failed for '" + path.string() + "'");
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw StorageError("cannot create '" + dir.string() + "': " + ec.message());

  write_text(dir / "model.json", to_json(model.config()).dump(2) + "\n");

  nlohmann::json index = nlohmann::json::array();
  for (const auto& spec : model.layout().specs()) {
    index.push_back({{"name", spec.name}, {"shape", spec.dims}, {"offset", spec.offset * 4}});
  }
  write_text(dir / "index.json", index.dump(2) + "\n");

  const auto params = model.parameters();
  RtsContainer c;
  c.data = TensorF({1, 1, 1, params.size()});
  for (std::size_t i = 0; i < params.size(); ++i) c.data[i] = static_cast<float>(params[i]);
  c.extensions["content"] = "weights";
  write_rts_container(c, dir / "weights.rts");
}

Model load_checkpoint(const std::filesystem::path& dir) {
  Model model(model_config_from_json(read_json(dir / "model.json")));
  const nlohmann::json index = read_json(dir / "index.json");
  const RtsContainer c = read_rts_container(dir / "weights.rts");
  auto params = model.parameters();
  if (c.data.size() != params.size()) {
    throw FormatError("checkpoint: " + std::to_string(c.data.size()) + " weights on disk, model expects " +
                      std::to_string(params.size()));
  }
  try {
    for (const auto& entry : index) {
      const auto& spec = model.layout().find(entry.at("name").get<std::string>());
      if (entry.at("offset").get<std::size_t>() != spec.offset * 4 ||
          entry.at("shape").get<std::vector<std::size_t>>() != spec.dims) {
        throw FormatError("checkpoint: index entry '" + spec.name + "' disagrees with model layout");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint index: ") + e.what());
  } catch (const ContractError& e) {
    throw FormatError(std::string("checkpoint index: ") + e.what());
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i] = c.data[i];
  return model;
}

}  // namespace sardist
