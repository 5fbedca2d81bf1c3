#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "devialab/fusion/cues.hpp"
#include "devialab/metrics/ranking.hpp"
#include "devialab/model/network.hpp"
#include "devialab/pipeline/config.hpp"
#include "devialab/pipeline/train.hpp"

namespace devialab::pipeline {

// Files inside a run directory.
struct RunArtifacts {
  std::filesystem::path dir;
  std::filesystem::path config() const { return dir / "config.json"; }
  std::filesystem::path checkpoint() const { return dir / "checkpoint.bin"; }
  std::filesystem::path train_log() const { return dir / "train_log.jsonl"; }
  std::filesystem::path batch_log() const { return dir / "batches.csv"; }
  std::filesystem::path scores() const { return dir / "scores.csv"; }
  std::filesystem::path heatmaps() const { return dir / "heatmaps"; }
  std::filesystem::path masks() const { return dir / "masks"; }
  std::filesystem::path report() const { return dir / "report.json"; }
  std::filesystem::path histograms() const { return dir / "histograms.csv"; }
};

// Trains on the manifest under `data_dir` and writes config, checkpoint
// (with calibration), per-epoch log and per-sample batch log.
RunArtifacts train_run(const RunConfig& config, const std::filesystem::path& data_dir,
                       const std::filesystem::path& out_dir, std::ostream* log = nullptr);

struct LoadedRun {
  RunArtifacts artifacts;
  RunConfig config;
  model::ModelState state;
  fusion::CueCalibration calibration;
  std::size_t resolution = 0;
  std::string digest;
};

// Throws IoError if the checkpoint is missing or its digest does not match
// the stored config.
LoadedRun load_run(const std::filesystem::path& run_dir);

// Wall-clock training time recorded in the run's log.
double train_seconds(const RunArtifacts& run);

// Test split in manifest order.
std::vector<fusion::ScoreRow> score_run(const LoadedRun& run, const std::filesystem::path& data_dir);
void write_scores(const std::filesystem::path& path, std::span<const fusion::ScoreRow> rows);

// Heatmaps (round(255 H)) and quantile masks for the test split, one PGM
// per record id.
void localize_run(const LoadedRun& run, const std::filesystem::path& data_dir);

struct EvalResult {
  double epsilon = 0.0;
  double auroc = 0.0;
  double auprc = 0.0;
  double pixel_auroc = 0.0;
  fusion::RawCues cue_auroc;
  fusion::RawCues cue_auroc_normalized;
  fusion::RawCues cue_auprc;
  std::size_t test_normal = 0;
  std::size_t test_anomalous = 0;
};

nlohmann::json eval_to_json(const EvalResult& r);

// Scores and localizes the test split in memory and computes every metric.
EvalResult evaluate_run(const LoadedRun& run, const std::filesystem::path& data_dir,
                        std::vector<fusion::ScoreRow>* rows = nullptr);

// Report JSON for one or more evaluated runs; drop tables appear when
// there are at least two contamination levels.
nlohmann::json make_report(const std::string& digest, double runtime_seconds, std::span<const EvalResult> results,
                           const std::string& timestamp);

std::string utc_timestamp();

// Writes report.json and histograms.csv into the run directory.
EvalResult eval_run(const std::filesystem::path& run_dir, const std::filesystem::path& data_dir,
                    std::ostream* log = nullptr);

struct SweepLeg {
  double epsilon = 0.0;
  std::filesystem::path data_dir;
  std::filesystem::path run_dir;
  EvalResult result;
  double seconds = 0.0;
};

// gen-data, train and eval per contamination level under one seed, then a
// combined report.json in `out_dir`.
std::vector<SweepLeg> sweep(const RunConfig& base, std::span<const double> epsilons,
                            const std::filesystem::path& out_dir, std::ostream* log = nullptr);

}  // namespace devialab::pipeline
