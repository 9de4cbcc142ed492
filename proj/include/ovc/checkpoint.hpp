#pragma once

// Binary checkpoint container (little endian):
//   "OVCCKPT1"                      8-byte magic
//   u32 version                     currently 1
//   u64 len + bytes                 model config (JSON)
//   u64 len + bytes                 metadata (JSON: train config, best score, step)
//   u64 len + bytes                 source vocabulary (token<TAB>count lines)
//   u64 len + bytes                 target vocabulary
//   u32 tensor count, then per tensor:
//     u32 name len + name, u64 rows, u64 cols, u8 dtype (1 = float64), payload row-major
//
// Tensors are stored at full float64 precision so that a reload reproduces
// evaluation bit for bit.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "ovc/core_types.hpp"
#include "ovc/model.hpp"

namespace ovc {

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  nlohmann::json metadata = nlohmann::json::object();  // train config, best_score, step

  OvcModel model() const { return OvcModel(config, params); }
};

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

}  // namespace ovc
