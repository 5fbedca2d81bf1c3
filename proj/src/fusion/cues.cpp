#include "devialab/fusion/cues.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "devialab/diff/ops.hpp"
#include "devialab/error.hpp"

namespace devialab::fusion {

using nlohmann::json;

void validate(const FusionWeights& w) {
  if (w.dev < 0.0 || w.ent < 0.0 || w.seg < 0.0) throw ConfigError("fusion: weights must be non-negative");
  if (!(w.dev + w.ent + w.seg > 0.0)) throw ConfigError("fusion: weights must not all be zero");
}

double entropy_score(double p) {
  p = std::clamp(p, 1e-12, 1.0 - 1e-12);
  const double h = -p * std::log(p) - (1.0 - p) * std::log1p(-p);
  return std::log1p(h);
}

double seg_topk_score(const diff::Tensor& map, double rho) {
  const std::size_t k = diff::topk_count(map.size(), rho);
  double acc = 0.0;
  for (std::size_t i : diff::topk_indices(map.data(), k)) acc += map[i];
  return acc / static_cast<double>(k);
}

CueCalibration fit_calibration(std::span<const RawCues> scores, double epsilon) {
  if (scores.empty()) throw DomainError("calibration: no scores");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("calibration: epsilon must lie in (0, 1)");
  CueCalibration cal;
  cal.epsilon = epsilon;
  auto fit = [&scores](double RawCues::*cue, const char* name) {
    CueRange r{scores[0].*cue, scores[0].*cue};
    for (const RawCues& s : scores) {
      if (!std::isfinite(s.*cue)) throw DomainError(std::string("calibration: non-finite ") + name + " score");
      r.min = std::min(r.min, s.*cue);
      r.max = std::max(r.max, s.*cue);
    }
    if (!(r.max > r.min)) throw DomainError(std::string("calibration: degenerate cue ") + name + " (max == min)");
    return r;
  };
  cal.dev = fit(&RawCues::dev, "s_dev");
  cal.ent = fit(&RawCues::ent, "s_ent");
  cal.seg = fit(&RawCues::seg, "s_seg");
  return cal;
}

double normalize_cue(double raw, const CueRange& range, double epsilon) {
  return std::clamp((raw - range.min) / (range.max - range.min), epsilon, 1.0);
}

RawCues normalize(const RawCues& raw, const CueCalibration& cal) {
  return {normalize_cue(raw.dev, cal.dev, cal.epsilon), normalize_cue(raw.ent, cal.ent, cal.epsilon),
          normalize_cue(raw.seg, cal.seg, cal.epsilon)};
}

double fuse_scores(double dev, double ent, double seg, const FusionWeights& w) {
  const double total = w.dev + w.ent + w.seg;
  return std::exp((w.dev * std::log(dev) + w.ent * std::log(ent) + w.seg * std::log(seg)) / total);
}

CueScores score_cues(const RawCues& raw, const CueCalibration& cal, const FusionWeights& w) {
  CueScores s{raw, normalize(raw, cal), 0.0};
  s.fused = fuse_scores(s.normalized.dev, s.normalized.ent, s.normalized.seg, w);
  return s;
}

json calibration_to_json(const CueCalibration& cal) {
  auto range = [](const CueRange& r) { return json{{"min", r.min}, {"max", r.max}}; };
  return {{"s_dev", range(cal.dev)}, {"s_ent", range(cal.ent)}, {"s_seg", range(cal.seg)}, {"epsilon", cal.epsilon}};
}

CueCalibration calibration_from_json(const json& j) {
  try {
    auto range = [](const json& r) { return CueRange{r.at("min").get<double>(), r.at("max").get<double>()}; };
    CueCalibration cal{range(j.at("s_dev")), range(j.at("s_ent")), range(j.at("s_seg")),
                       j.at("epsilon").get<double>()};
    for (const CueRange* r : {&cal.dev, &cal.ent, &cal.seg}) {
      if (!(r->max > r->min)) throw IoError("calibration: stored range is degenerate");
    }
    return cal;
  } catch (const json::exception& e) {
    throw IoError(std::string("calibration: ") + e.what());
  }
}

namespace {

constexpr const char* kScoresHeader = "id,label,s_dev,s_ent,s_seg,s_dev_n,s_ent_n,s_seg_n,s_fused";

double parse_double(const std::string& field, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw IoError("scores csv line " + std::to_string(line) + ": bad number '" + field + "'");
  }
  return v;
}

}  // namespace

void write_scores_csv(std::ostream& out, std::span<const ScoreRow> rows) {
  std::ostringstream buf;
  buf.precision(17);
  buf << kScoresHeader << '\n';
  for (const ScoreRow& r : rows) {
    const CueScores& s = r.scores;
    buf << r.id << ',' << r.label << ',' << s.raw.dev << ',' << s.raw.ent << ',' << s.raw.seg << ','
        << s.normalized.dev << ',' << s.normalized.ent << ',' << s.normalized.seg << ',' << s.fused << '\n';
  }
  out << buf.str();
}

std::vector<ScoreRow> read_scores_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kScoresHeader) throw IoError("scores csv: missing or unexpected header");
  std::vector<ScoreRow> rows;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 9) throw IoError("scores csv line " + std::to_string(n) + ": expected 9 fields");
    ScoreRow r;
    r.id = f[0];
    r.label = static_cast<int>(parse_double(f[1], n));
    r.scores.raw = {parse_double(f[2], n), parse_double(f[3], n), parse_double(f[4], n)};
    r.scores.normalized = {parse_double(f[5], n), parse_double(f[6], n), parse_double(f[7], n)};
    r.scores.fused = parse_double(f[8], n);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace devialab::fusion
