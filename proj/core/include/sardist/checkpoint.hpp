#pragma once

#include <filesystem>

#include "sardist/model.hpp"

namespace sardist {

/// Writes `dir/model.json` (ModelConfig), `dir/index.json` ({name, shape, offset}
/// per tensor, offsets in bytes into the payload) and `dir/weights.rts`, an RTS
/// container of shape [1,1,1,P] holding every weight as float32.
void save_checkpoint(const Model& model, const std::filesystem::path& dir);
Model load_checkpoint(const std::filesystem::path& dir);

}  // namespace sardist
