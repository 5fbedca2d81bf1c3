#include "devialab/pipeline/runs.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>

#include "devialab/error.hpp"
#include "devialab/localize/attribution.hpp"
#include "devialab/model/checkpoint.hpp"
#include "devialab/pipeline/infer.hpp"
#include "devialab/synth/netpbm.hpp"

namespace devialab::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string batch_log_csv(std::span<const BatchLog> batches) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,batch,reweighted,id,provenance,z,p,l_soft,l_bce,l_fc,w1,w2\n";
  for (const BatchLog& b : batches) {
    for (const SampleLog& s : b.samples) {
      out << b.epoch << ',' << b.batch << ',' << (b.reweighted ? 1 : 0) << ',' << s.id << ','
          << synth::provenance_name(s.provenance) << ',' << s.z << ',' << s.p << ',' << s.l_soft << ',' << s.l_bce
          << ',' << s.l_fc << ',' << s.w1 << ',' << s.w2 << '\n';
    }
  }
  return out.str();
}

json cues_json(const fusion::RawCues& c) { return {{"s_dev", c.dev}, {"s_ent", c.ent}, {"s_seg", c.seg}}; }

}  // namespace

RunArtifacts train_run(const RunConfig& config, const fs::path& data_dir, const fs::path& out_dir, std::ostream* log) {
  const synth::DatasetManifest manifest = synth::read_manifest(data_dir / "manifest.json");
  const TrainingSet data = load_training_set(manifest, data_dir);
  if (log) {
    *log << "training on " << data.size() << " records from " << data_dir.string() << " (epsilon "
         << manifest.epsilon << ", " << manifest.counts.contaminant << " contaminants)\n";
  }
  TrainResult result = train_model(config, data, {log, true});

  RunArtifacts run{out_dir};
  fs::create_directories(out_dir);
  save_config(run.config(), config);
  json extra = {{"config", config_to_json(config)},
                {"config_digest", config_digest(config)},
                {"calibration", fusion::calibration_to_json(result.calibration)},
                {"resolution", manifest.resolution},
                {"dataset", {{"seed", manifest.seed}, {"epsilon", manifest.epsilon}}}};
  model::save_checkpoint(run.checkpoint(), result.state, extra);

  std::ostringstream tl;
  for (const EpochLog& e : result.epochs) {
    tl << json{{"epoch", e.epoch},       {"reweighted", e.reweighted}, {"objective", e.objective},
               {"l_soft", e.l_soft},     {"l_bce", e.l_bce},           {"l_fc", e.l_fc},
               {"seconds", e.seconds}}
              .dump()
       << '\n';
  }
  tl << json{{"event", "done"}, {"seconds", result.seconds}}.dump() << '\n';
  write_text(run.train_log(), tl.str());
  write_text(run.batch_log(), batch_log_csv(result.batches));
  if (log) *log << "trained in " << result.seconds << " s; run written to " << out_dir.string() << '\n';
  return run;
}

LoadedRun load_run(const fs::path& run_dir) {
  LoadedRun run{RunArtifacts{run_dir}, {}, model::ModelState::zeros({}), {}, 0, {}};
  model::Checkpoint ck = model::load_checkpoint(run.artifacts.checkpoint());
  try {
    run.config = config_from_json(ck.extra.at("config"));
    run.calibration = fusion::calibration_from_json(ck.extra.at("calibration"));
    run.resolution = ck.extra.at("resolution").get<std::size_t>();
    run.digest = ck.extra.at("config_digest").get<std::string>();
  } catch (const json::exception& e) {
    throw IoError("checkpoint " + run.artifacts.checkpoint().string() + ": incomplete metadata (" + e.what() + ")");
  }
  if (config_digest(run.config) != run.digest) throw IoError("checkpoint config digest mismatch");
  if (!(ck.state.config() == run.config.model)) throw IoError("checkpoint architecture differs from its config");
  run.state = std::move(ck.state);
  return run;
}

double train_seconds(const RunArtifacts& run) {
  std::ifstream in(run.train_log());
  if (!in) throw IoError("cannot open " + run.train_log().string());
  double seconds = 0.0;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_object() && j.value("event", "") == "done") seconds = j.value("seconds", 0.0);
  }
  return seconds;
}

std::vector<fusion::ScoreRow> score_run(const LoadedRun& run, const fs::path& data_dir) {
  const auto manifest = synth::read_manifest(data_dir / "manifest.json");
  std::vector<fusion::ScoreRow> rows;
  for (const synth::RecordEntry* e : manifest.split(synth::Split::kTest)) {
    const auto sample = synth::load_sample(data_dir, *e);
    const Inference inf = infer(run.state, run.calibration, run.config, sample.image, run.resolution, false);
    rows.push_back({e->id, e->truth, inf.scores});
  }
  return rows;
}

void write_scores(const fs::path& path, std::span<const fusion::ScoreRow> rows) {
  std::ostringstream out;
  fusion::write_scores_csv(out, rows);
  write_text(path, out.str());
}

void localize_run(const LoadedRun& run, const fs::path& data_dir) {
  const auto manifest = synth::read_manifest(data_dir / "manifest.json");
  fs::create_directories(run.artifacts.heatmaps());
  fs::create_directories(run.artifacts.masks());
  for (const synth::RecordEntry* e : manifest.split(synth::Split::kTest)) {
    const auto sample = synth::load_sample(data_dir, *e);
    const Inference inf = infer(run.state, run.calibration, run.config, sample.image, run.resolution, true);
    const diff::Tensor& h = inf.localization->heatmap;
    synth::write_pgm(run.artifacts.heatmaps() / (e->id + ".pgm"), h);
    synth::write_pgm(run.artifacts.masks() / (e->id + ".pgm"),
                     localize::quantile_mask(h, run.config.localization.mask_quantile));
  }
}

json eval_to_json(const EvalResult& r) {
  return {{"epsilon", r.epsilon},
          {"auroc", r.auroc},
          {"auprc", r.auprc},
          {"pixel_auroc", r.pixel_auroc},
          {"cue_auroc", cues_json(r.cue_auroc)},
          {"cue_auroc_normalized", cues_json(r.cue_auroc_normalized)},
          {"cue_auprc", cues_json(r.cue_auprc)},
          {"test_counts", {{"normal", r.test_normal}, {"anomalous", r.test_anomalous}}}};
}

EvalResult evaluate_run(const LoadedRun& run, const fs::path& data_dir, std::vector<fusion::ScoreRow>* rows_out) {
  const auto manifest = synth::read_manifest(data_dir / "manifest.json");
  EvalResult r;
  r.epsilon = manifest.epsilon;
  std::vector<fusion::ScoreRow> rows;
  std::vector<diff::Tensor> maps, masks;
  for (const synth::RecordEntry* e : manifest.split(synth::Split::kTest)) {
    auto sample = synth::load_sample(data_dir, *e);
    Inference inf = infer(run.state, run.calibration, run.config, sample.image, run.resolution, true);
    rows.push_back({e->id, e->truth, inf.scores});
    maps.push_back(std::move(inf.localization->heatmap));
    masks.push_back(std::move(sample.mask));
    (e->truth ? r.test_anomalous : r.test_normal) += 1;
  }
  std::vector<int> y;
  std::vector<double> fused, raw[3], norm[3];
  for (const auto& row : rows) {
    y.push_back(row.label);
    fused.push_back(row.scores.fused);
    const auto& s = row.scores;
    raw[0].push_back(s.raw.dev);
    raw[1].push_back(s.raw.ent);
    raw[2].push_back(s.raw.seg);
    norm[0].push_back(s.normalized.dev);
    norm[1].push_back(s.normalized.ent);
    norm[2].push_back(s.normalized.seg);
  }
  r.auroc = metrics::auroc(fused, y);
  r.auprc = metrics::auprc(fused, y);
  r.pixel_auroc = metrics::pixel_auroc(maps, masks);
  r.cue_auroc = {metrics::auroc(raw[0], y), metrics::auroc(raw[1], y), metrics::auroc(raw[2], y)};
  r.cue_auroc_normalized = {metrics::auroc(norm[0], y), metrics::auroc(norm[1], y), metrics::auroc(norm[2], y)};
  r.cue_auprc = {metrics::auprc(raw[0], y), metrics::auprc(raw[1], y), metrics::auprc(raw[2], y)};
  if (rows_out) *rows_out = std::move(rows);
  return r;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json make_report(const std::string& digest, double runtime_seconds, std::span<const EvalResult> results,
                 const std::string& timestamp) {
  json per = json::array();
  std::vector<metrics::LevelMetric> image, pixel;
  for (const EvalResult& r : results) {
    per.push_back(eval_to_json(r));
    image.push_back({r.epsilon, r.auroc});
    pixel.push_back({r.epsilon, r.pixel_auroc});
  }
  auto drops = [](const std::vector<metrics::LevelMetric>& levels) {
    json rows = json::array();
    if (levels.size() < 2) return rows;
    for (const auto& d : metrics::robustness_table(levels)) {
      rows.push_back({{"eps_from", d.eps_from}, {"eps_to", d.eps_to}, {"from", d.metric_from},
                      {"to", d.metric_to}, {"drop_pct", d.drop_pct}});
    }
    return rows;
  };
  return {{"config_digest", digest},
          {"timestamp", timestamp},
          {"pixel_auroc_mode", "pooled"},
          {"runtime", {{"train_seconds", runtime_seconds}}},
          {"results", per},
          {"drops", {{"image_auroc", drops(image)}, {"pixel_auroc", drops(pixel)}}}};
}

EvalResult eval_run(const fs::path& run_dir, const fs::path& data_dir, std::ostream* log) {
  const LoadedRun run = load_run(run_dir);
  std::vector<fusion::ScoreRow> rows;
  const EvalResult r = evaluate_run(run, data_dir, &rows);
  const EvalResult one[] = {r};
  write_text(run.artifacts.report(),
             make_report(run.digest, train_seconds(run.artifacts), one, utc_timestamp()).dump(2) + "\n");
  std::vector<double> fused;
  std::vector<int> y;
  for (const auto& row : rows) {
    fused.push_back(row.scores.fused);
    y.push_back(row.label);
  }
  std::ostringstream hist;
  metrics::write_histogram_csv(hist, fused, y);
  write_text(run.artifacts.histograms(), hist.str());
  if (log) {
    *log << "auroc " << r.auroc << " auprc " << r.auprc << " pixel_auroc " << r.pixel_auroc << " (dev "
         << r.cue_auroc.dev << ", ent " << r.cue_auroc.ent << ", seg " << r.cue_auroc.seg << ")\n";
  }
  return r;
}

std::vector<SweepLeg> sweep(const RunConfig& base, std::span<const double> epsilons, const fs::path& out_dir,
                            std::ostream* log) {
  if (epsilons.size() < 2) throw ConfigError("sweep: need at least two epsilon values");
  std::vector<SweepLeg> legs;
  std::vector<EvalResult> results;
  double total = 0.0;
  for (double eps : epsilons) {
    RunConfig cfg = base;
    cfg.dataset.epsilon = eps;
    validate(cfg);
    char tag[32];
    std::snprintf(tag, sizeof tag, "eps_%.2f", eps);
    SweepLeg leg{eps, out_dir / tag / "data", out_dir / tag / "run", {}, 0.0};
    if (log) *log << "sweep leg epsilon " << eps << '\n';
    synth::build_dataset(cfg.dataset, leg.data_dir);
    train_run(cfg, leg.data_dir, leg.run_dir, log);
    leg.result = eval_run(leg.run_dir, leg.data_dir, log);
    leg.seconds = train_seconds(RunArtifacts{leg.run_dir});
    total += leg.seconds;
    results.push_back(leg.result);
    legs.push_back(std::move(leg));
  }
  write_text(out_dir / "report.json",
             make_report(config_digest(base), total, results, utc_timestamp()).dump(2) + "\n");
  return legs;
}

}  // namespace devialab::pipeline
