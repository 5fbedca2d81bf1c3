#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "devialab/diff/tensor.hpp"

namespace devialab::fusion {

inline constexpr double kDefaultClamp = 1e-6;

struct RawCues {
  double dev = 0.0;
  double ent = 0.0;
  double seg = 0.0;
};

struct CueScores {
  RawCues raw;
  RawCues normalized;  // each in [epsilon, 1]
  double fused = 0.0;
};

struct CueRange {
  double min = 0.0;
  double max = 1.0;
};

// Per-cue min/max over training scores plus the lower clamp.
struct CueCalibration {
  CueRange dev, ent, seg;
  double epsilon = kDefaultClamp;
};

struct FusionWeights {
  double dev = 0.55;
  double ent = 0.10;
  double seg = 0.35;
};

// Throws ConfigError on a negative weight or an all-zero set.
void validate(const FusionWeights& w);

// log(1 + H(p)) with H the binary entropy in nats.
double entropy_score(double p);

// Mean of the k = max(1, ceil(rho * HW)) largest pixels.
double seg_topk_score(const diff::Tensor& map, double rho);

// Throws DomainError naming the first cue whose max equals its min.
CueCalibration fit_calibration(std::span<const RawCues> scores, double epsilon = kDefaultClamp);

double normalize_cue(double raw, const CueRange& range, double epsilon);
RawCues normalize(const RawCues& raw, const CueCalibration& cal);

// Weighted geometric mean with the exponents normalized by their sum.
double fuse_scores(double dev, double ent, double seg, const FusionWeights& w);

CueScores score_cues(const RawCues& raw, const CueCalibration& cal, const FusionWeights& w);

nlohmann::json calibration_to_json(const CueCalibration& cal);
CueCalibration calibration_from_json(const nlohmann::json& j);

struct ScoreRow {
  std::string id;
  int label = 0;
  CueScores scores;
};

// id,label,s_dev,s_ent,s_seg,s_dev_n,s_ent_n,s_seg_n,s_fused at 17 significant digits.
void write_scores_csv(std::ostream& out, std::span<const ScoreRow> rows);
std::vector<ScoreRow> read_scores_csv(std::istream& in);

}  // namespace devialab::fusion
