#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "devialab/diff/tensor.hpp"
#include "devialab/synth/textures.hpp"

namespace devialab::synth {

enum class Provenance { kNominal, kPseudo, kFewshot, kContaminant, kTestNormal, kTestAnomalous };

std::string_view provenance_name(Provenance p);
Provenance parse_provenance(std::string_view name);

enum class Split { kTrain, kTest };

struct DatasetConfig {
  std::uint64_t seed = 7;
  std::size_t resolution = 64;
  std::size_t nominal = 200;  // N, contaminants included
  std::size_t pseudo = 200;   // M
  std::size_t fewshot = 10;   // m
  double epsilon = 0.10;
  TextureFamily family = TextureFamily::kStripes;
  std::size_t test_normal = 100;
  std::size_t test_anomalous = 100;
};

// Manifest entry. `label` is the training-view label; `truth` is whether
// the image actually contains an anomaly.
struct RecordEntry {
  std::string id;
  std::string path;
  std::string mask_path;
  int label = 0;
  int truth = 0;
  Provenance provenance = Provenance::kNominal;
  Split split = Split::kTrain;
};

struct DatasetCounts {
  std::size_t nominal = 0;
  std::size_t pseudo = 0;
  std::size_t fewshot = 0;
  std::size_t contaminant = 0;
  std::size_t test_normal = 0;
  std::size_t test_anomalous = 0;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::size_t resolution = 0;
  double epsilon = 0.0;
  TextureFamily family = TextureFamily::kStripes;
  DatasetCounts counts;
  std::vector<std::string> warnings;
  std::vector<RecordEntry> records;

  std::vector<const RecordEntry*> split(Split s) const;
};

// One loaded item: image 3HW in [0, 1], mask 1HW binary.
struct SampleRecord {
  diff::Tensor image;
  diff::Tensor mask;
  int label = 0;
  int truth = 0;
  Provenance provenance = Provenance::kNominal;
};

// Number of contaminants for N nominal records at ratio epsilon; zero (with
// `warn` set) when epsilon > 0 but epsilon * N < 1.
std::size_t contaminant_count(std::size_t nominal, double epsilon, bool* warn = nullptr);

// Contaminant noise level in [0, 1] pixel units.
inline constexpr double kContaminantNoiseStd = 0.1;

// Generates every record, writes images/ masks/ and manifest.json under
// `out_dir`, and returns the manifest.
DatasetManifest build_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

SampleRecord load_sample(const std::filesystem::path& data_dir, const RecordEntry& entry);

}  // namespace devialab::synth
