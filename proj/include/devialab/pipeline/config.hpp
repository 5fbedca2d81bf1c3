#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "json.hpp"

#include "devialab/fusion/cues.hpp"
#include "devialab/model/network.hpp"
#include "devialab/synth/dataset.hpp"

namespace devialab::pipeline {

struct TrainingConfig {
  std::size_t epochs = 25;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  double gamma = 5.0;   // soft-deviation margin
  double rho = 0.1;     // top-k ratio for s_dev and s_seg
  double alpha = 0.1;   // 1.0 selects the KL update
  double lambda = 0.1;
  std::size_t burn_in = 2;
  std::size_t reference_count = 5000;
};

struct FusionConfig {
  fusion::FusionWeights weights;
  double epsilon = fusion::kDefaultClamp;
};

struct LocalizationConfig {
  double sigma_blur = 4.0;
  double mask_quantile = 0.95;
};

struct RunConfig {
  // Master seed: dataset generation, initialization, shuffling and the
  // reference draws all derive from it unless overridden per section.
  std::uint64_t seed = 7;
  synth::DatasetConfig dataset;
  model::ModelConfig model;
  TrainingConfig training;
  FusionConfig fusion;
  LocalizationConfig localization;
};

// Missing keys take defaults; unknown keys and out-of-range values throw
// ConfigError naming the offending path.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);
void validate(const RunConfig& c);

RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& c);

// 16 hex digits of FNV-1a over the canonical JSON form.
std::string config_digest(const RunConfig& c);

// Applies DEVIALAB_SEED when set (to the master, dataset and init seeds)
// and logs the override. Returns the seed used from the environment.
std::optional<std::uint64_t> apply_seed_override(RunConfig& c, std::ostream* log);

void set_seed(RunConfig& c, std::uint64_t seed);

}  // namespace devialab::pipeline
