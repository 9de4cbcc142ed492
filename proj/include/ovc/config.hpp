#pragma once

// Run configuration file (JSON):
//   {"model": {"d_word": 256, "d_hidden": 512, "n_heads": 4, "d_obj": 2048,
//              "variant": "object_level", "residual": false, "max_objects": 20, "seed": 1},
//    "train": {"alpha": 0.1, "beta": 0.1, "gamma": 0.48, "patience": 10, ...}}
// Every key is optional; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "ovc/model.hpp"
#include "ovc/training.hpp"

namespace ovc {

struct RunConfig {
  ModelConfig model;  // vocabulary sizes are filled in from the data
  TrainConfig train;
};

nlohmann::json run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Hex FNV-1a digest of a byte string or file.
std::string content_hash(const std::string& bytes);
std::string file_hash(const std::filesystem::path& path);

}  // namespace ovc
