#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "devialab/diff/adam.hpp"
#include "devialab/fusion/cues.hpp"
#include "devialab/model/network.hpp"
#include "devialab/pipeline/config.hpp"
#include "devialab/synth/dataset.hpp"

namespace devialab::pipeline {

// Training split held in memory. Masks are the training view: all zero
// for anything labeled nominal, contaminants included.
struct TrainingSet {
  std::vector<synth::RecordEntry> entries;
  std::vector<diff::Tensor> images;
  std::vector<diff::Tensor> masks;

  std::size_t size() const noexcept { return entries.size(); }
};

TrainingSet load_training_set(const synth::DatasetManifest& manifest, const std::filesystem::path& data_dir);

struct SampleLog {
  std::string id;
  synth::Provenance provenance = synth::Provenance::kNominal;
  double z = 0.0;
  double p = 0.0;
  double l_soft = 0.0;
  double l_bce = 0.0;
  double l_fc = 0.0;
  double w1 = 0.0;
  double w2 = 0.0;
};

struct BatchLog {
  std::size_t epoch = 0;  // 1-based
  std::size_t batch = 0;  // 0-based within the epoch
  bool reweighted = false;
  double objective = 0.0;
  std::vector<SampleLog> samples;
};

struct EpochLog {
  std::size_t epoch = 0;
  bool reweighted = false;
  double objective = 0.0;  // mean over batches
  double l_soft = 0.0;     // means over samples
  double l_bce = 0.0;
  double l_fc = 0.0;
  double seconds = 0.0;
};

// Seed streams derived from the master seed.
enum SeedStream : std::uint64_t { kShuffleStream = 11, kReferenceStream = 12 };

// Builds the minibatch objective on `tape`. With `reweight` the soft and
// BCE terms use divergence weights, otherwise 1/B each. Fills `log`.
diff::Var build_objective(diff::Tape& tape, const model::BoundParams& params, const TrainingSet& data,
                          std::span<const std::size_t> batch, const TrainingConfig& cfg, bool reweight,
                          std::uint64_t reference_seed, BatchLog& log);

// Objective value of a batch under the given state, no update.
double evaluate_objective(const model::ModelState& state, const TrainingSet& data, std::span<const std::size_t> batch,
                          const TrainingConfig& cfg, bool reweight, std::uint64_t reference_seed);

// One forward/backward/Adam step. `log` arrives with epoch and batch set
// so a non-finite loss can be reported with epoch, batch and sample.
void training_step(model::ModelState& state, diff::OptimizerState& opt, const TrainingSet& data,
                   std::span<const std::size_t> batch, const TrainingConfig& cfg, bool reweight,
                   std::uint64_t reference_seed, BatchLog& log);

struct TrainHooks {
  std::ostream* log = nullptr;
  bool keep_batches = false;
};

struct TrainResult {
  model::ModelState state;
  fusion::CueCalibration calibration;
  std::vector<EpochLog> epochs;
  std::vector<BatchLog> batches;  // only with keep_batches
  double seconds = 0.0;
};

// Runs every epoch, then fits the cue calibration on training-split scores.
TrainResult train_model(const RunConfig& config, const TrainingSet& data, const TrainHooks& hooks = {});

}  // namespace devialab::pipeline
