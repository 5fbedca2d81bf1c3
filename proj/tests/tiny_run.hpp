#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "devialab/pipeline/config.hpp"

namespace devialab::testing {

// Small enough that a full train/eval cycle takes about a second.
inline pipeline::RunConfig tiny_config(std::uint64_t seed = 3) {
  pipeline::RunConfig c;
  pipeline::set_seed(c, seed);
  c.dataset.resolution = 16;
  c.dataset.nominal = 10;
  c.dataset.pseudo = 8;
  c.dataset.fewshot = 2;
  c.dataset.epsilon = 0.2;
  c.dataset.test_normal = 6;
  c.dataset.test_anomalous = 6;
  c.model.widths = {4, 4, 4};
  c.model.head_hidden = 4;
  c.training.epochs = 3;
  c.training.batch_size = 8;
  c.training.burn_in = 1;
  c.training.reference_count = 200;
  c.localization.sigma_blur = 1.0;
  return c;
}

// Fresh scratch directory under the system temp dir, removed on scope exit.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("devialab_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace devialab::testing
