#pragma once

#include <filesystem>

#include "json.hpp"

#include "devialab/model/network.hpp"

namespace devialab::model {

// On-disk layout:
//   8 bytes   magic "DEVIALB1"
//   8 bytes   header length n, little-endian u64
//   n bytes   JSON header {architecture, parameters:[{name, shape, offset, count}], extra}
//   ...       raw little-endian f64 parameter blocks; offsets are relative
//             to the first byte after the header
inline constexpr char kCheckpointMagic[9] = "DEVIALB1";

struct Checkpoint {
  ModelState state;
  nlohmann::json extra;  // run metadata such as cue calibration
};

void save_checkpoint(const std::filesystem::path& path, const ModelState& state,
                     const nlohmann::json& extra = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace devialab::model
