#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "devialab/diff/adam.hpp"
#include "devialab/error.hpp"
#include "devialab/model/checkpoint.hpp"
#include "devialab/pipeline/infer.hpp"
#include "devialab/pipeline/runs.hpp"
#include "devialab/pipeline/train.hpp"
#include "devialab/synth/dataset.hpp"
#include "tiny_run.hpp"

using namespace devialab;
using namespace devialab::pipeline;
using nlohmann::json;
using testing::ScratchDir;
using testing::slurp;
using testing::tiny_config;

namespace {

struct TinyData {
  ScratchDir dir{"pipe"};
  synth::DatasetManifest manifest;
  TrainingSet set;
  explicit TinyData(const RunConfig& c) {
    manifest = synth::build_dataset(c.dataset, dir / "data");
    set = load_training_set(manifest, dir / "data");
  }
};

}  // namespace

TEST_CASE("config round-trips and digests are stable") {
  const RunConfig c = tiny_config();
  const RunConfig back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(config_digest(back) == config_digest(c));
  CHECK(config_digest(c).size() == 16);
  RunConfig other = c;
  other.training.lambda = 0.2;
  CHECK(config_digest(other) != config_digest(c));
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(config_from_json(json{{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"training", {{"epoch", 3}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"training", {{"epochs", -1}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"training", {{"epochs", "many"}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"dataset", {{"epsilon", 0.4}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"dataset", {{"resolution", 20}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"model", {{"uncertainty_pool", "max"}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"fusion", {{"w_dev", -0.1}}}}), ConfigError);
  try {
    config_from_json(json{{"localization", {{"sigma", 2}}}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("localization.sigma") != std::string::npos);
  }
}

TEST_CASE("missing keys take defaults") {
  const RunConfig c = config_from_json(json::object());
  CHECK(c.training.epochs == 25);
  CHECK(c.training.burn_in == 2);
  CHECK(c.dataset.nominal == 200);
  CHECK(c.fusion.weights.dev == 0.55);
}

TEST_CASE("DEVIALAB_SEED overrides every seed and is logged") {
  RunConfig c = tiny_config(3);
  ::setenv("DEVIALAB_SEED", "41", 1);
  std::ostringstream log;
  const auto used = apply_seed_override(c, &log);
  ::unsetenv("DEVIALAB_SEED");
  REQUIRE(used.has_value());
  CHECK(*used == 41);
  CHECK(c.seed == 41);
  CHECK(c.dataset.seed == 41);
  CHECK(c.model.init_seed == 41);
  CHECK(log.str().find("DEVIALAB_SEED") != std::string::npos);

  RunConfig d = tiny_config(3);
  CHECK_FALSE(apply_seed_override(d, nullptr).has_value());
  CHECK(d.seed == 3);

  ::setenv("DEVIALAB_SEED", "12x", 1);
  CHECK_THROWS_AS(apply_seed_override(d, nullptr), ConfigError);
  ::unsetenv("DEVIALAB_SEED");
}

TEST_CASE("training view hides contaminant masks") {
  const RunConfig c = tiny_config();
  TinyData t(c);
  std::size_t contaminants = 0;
  for (std::size_t i = 0; i < t.set.size(); ++i) {
    if (t.set.entries[i].label == 0) {
      for (double v : t.set.masks[i].data()) REQUIRE(v == 0.0);
    }
    contaminants += t.set.entries[i].provenance == synth::Provenance::kContaminant;
  }
  CHECK(contaminants == 2);
}

TEST_CASE("burn-in covering every epoch keeps weights uniform") {
  RunConfig c = tiny_config();
  c.training.burn_in = c.training.epochs;
  TinyData t(c);
  const TrainResult r = train_model(c, t.set, {nullptr, true});
  REQUIRE(!r.batches.empty());
  for (const BatchLog& b : r.batches) {
    CHECK_FALSE(b.reweighted);
    const double u = 1.0 / static_cast<double>(b.samples.size());
    for (const SampleLog& s : b.samples) {
      CHECK(s.w1 == u);
      CHECK(s.w2 == u);
    }
  }
}

TEST_CASE("reweighting switches on after burn-in") {
  RunConfig c = tiny_config();
  c.training.burn_in = 1;
  TinyData t(c);
  const TrainResult r = train_model(c, t.set, {nullptr, true});
  std::size_t compared = 0;
  for (const BatchLog& b : r.batches) {
    CHECK(b.reweighted == (b.epoch > c.training.burn_in));
    double s1 = 0.0, s2 = 0.0;
    for (const SampleLog& s : b.samples) {
      s1 += s.w1;
      s2 += s.w2;
    }
    CHECK(s1 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s2 == doctest::Approx(1.0).epsilon(1e-12));
    if (!b.reweighted) continue;
    // Higher soft loss must mean lower soft weight: checked across
    // contaminant/clean-nominal pairs, which is what the scheme is for.
    for (const SampleLog& a : b.samples) {
      if (a.provenance != synth::Provenance::kContaminant) continue;
      for (const SampleLog& n : b.samples) {
        if (n.provenance != synth::Provenance::kNominal || !(a.l_soft > n.l_soft)) continue;
        CHECK(a.w1 < n.w1);
        ++compared;
      }
    }
  }
  CHECK(compared > 0);
}

TEST_CASE("a single step lowers the loss on its own batch") {
  RunConfig c = tiny_config();
  c.dataset.nominal = 4;
  c.dataset.pseudo = 3;
  c.dataset.fewshot = 1;
  c.dataset.epsilon = 0.0;
  c.training.lr = 2e-4;
  c.training.batch_size = 8;
  TinyData t(c);
  REQUIRE(t.set.size() == 8);
  std::vector<std::size_t> batch(8);
  std::iota(batch.begin(), batch.end(), 0);

  auto state = model::ModelState::initialize(c.model);
  diff::AdamConfig ac;
  ac.learning_rate = c.training.lr;
  auto opt = diff::make_adam_state(state.params(), ac);
  const double before = evaluate_objective(state, t.set, batch, c.training, false, 99);
  BatchLog log;
  log.epoch = 1;
  training_step(state, opt, t.set, batch, c.training, false, 99, log);
  CHECK(log.objective == before);
  const double after = evaluate_objective(state, t.set, batch, c.training, false, 99);
  CHECK(after < before);
}

TEST_CASE("non-finite losses abort with location") {
  RunConfig c = tiny_config();
  TinyData t(c);
  auto state = model::ModelState::initialize(c.model);
  state.param("dev2.b")[0] = std::nan("");
  std::vector<std::size_t> batch{0, 1};
  try {
    evaluate_objective(state, t.set, batch, c.training, false, 1);
    FAIL("expected TrainingDiverged");
  } catch (const TrainingDiverged& e) {
    const std::string msg = e.what();
    CHECK(msg.find("batch") != std::string::npos);
    CHECK(msg.find(t.set.entries[0].id) != std::string::npos);
  }
}

TEST_CASE("training is deterministic") {
  const RunConfig c = tiny_config();
  TinyData t(c);
  const TrainResult a = train_model(c, t.set);
  const TrainResult b = train_model(c, t.set);
  CHECK(a.state == b.state);
  CHECK(a.calibration.dev.min == b.calibration.dev.min);
  CHECK(a.calibration.seg.max == b.calibration.seg.max);
  CHECK(a.epochs.size() == c.training.epochs);
  CHECK(a.state.all_finite());
}

TEST_CASE("inference contract") {
  const RunConfig c = tiny_config();
  TinyData t(c);
  const TrainResult r = train_model(c, t.set);
  const auto& img = t.set.images[0];
  const Inference a = infer(r.state, r.calibration, c, img, 16, true);
  const Inference b = infer(r.state, r.calibration, c, img, 16, true);
  CHECK(a.scores.fused == b.scores.fused);
  CHECK(a.localization->heatmap == b.localization->heatmap);
  CHECK(a.localization->heatmap.shape() == diff::Shape{1, 16, 16});
  const auto& n = a.scores.normalized;
  CHECK(a.scores.fused >= std::min({n.dev, n.ent, n.seg}) - 1e-12);
  CHECK(a.scores.fused <= std::max({n.dev, n.ent, n.seg}) + 1e-12);
  CHECK_FALSE(infer(r.state, r.calibration, c, img, 16, false).localization.has_value());
  CHECK_THROWS_AS(infer(r.state, r.calibration, c, img, 32, false), ShapeError);
}

TEST_CASE("run artifacts: train, score, localize, eval") {
  const RunConfig c = tiny_config();
  ScratchDir dir("runs");
  synth::build_dataset(c.dataset, dir / "data");
  const RunArtifacts art = train_run(c, dir / "data", dir / "run", nullptr);
  CHECK(std::filesystem::exists(art.checkpoint()));
  CHECK(std::filesystem::exists(art.batch_log()));

  const LoadedRun run = load_run(dir / "run");
  CHECK(run.digest == config_digest(c));
  CHECK(run.resolution == 16);
  CHECK(train_seconds(art) > 0.0);

  const auto rows = score_run(run, dir / "data");
  CHECK(rows.size() == 12);
  write_scores(art.scores(), rows);
  std::ifstream in(art.scores());
  const auto back = fusion::read_scores_csv(in);
  REQUIRE(back.size() == rows.size());
  CHECK(back[3].scores.fused == rows[3].scores.fused);

  localize_run(run, dir / "data");
  CHECK(std::distance(std::filesystem::directory_iterator(art.heatmaps()), {}) == 12);
  CHECK(std::distance(std::filesystem::directory_iterator(art.masks()), {}) == 12);

  const EvalResult e = eval_run(dir / "run", dir / "data", nullptr);
  const json report = json::parse(slurp(art.report()));
  CHECK(report["config_digest"] == run.digest);
  CHECK(report["pixel_auroc_mode"] == "pooled");
  REQUIRE(report["results"].size() == 1);
  CHECK(report["results"][0]["auroc"].get<double>() == e.auroc);
  CHECK(report["results"][0]["test_counts"]["normal"] == 6);
  CHECK(report["results"][0]["cue_auroc"].contains("s_seg"));
  CHECK(report["drops"]["image_auroc"].empty());
  CHECK(std::filesystem::exists(art.histograms()));

  // Re-evaluating without retraining only moves the timestamp.
  json first = report;
  eval_run(dir / "run", dir / "data", nullptr);
  json second = json::parse(slurp(art.report()));
  first.erase("timestamp");
  second.erase("timestamp");
  CHECK(first == second);
}

TEST_CASE("load_run rejects a tampered checkpoint") {
  const RunConfig c = tiny_config();
  ScratchDir dir("tamper");
  synth::build_dataset(c.dataset, dir / "data");
  const RunArtifacts art = train_run(c, dir / "data", dir / "run", nullptr);
  auto ck = model::load_checkpoint(art.checkpoint());
  ck.extra["config_digest"] = "0000000000000000";
  model::save_checkpoint(art.checkpoint(), ck.state, ck.extra);
  CHECK_THROWS_AS(load_run(dir / "run"), IoError);
  CHECK_THROWS_AS(load_run(dir / "missing"), IoError);
}

TEST_CASE("sweep writes one entry per epsilon and the drop rows") {
  RunConfig c = tiny_config();
  c.training.epochs = 1;
  ScratchDir dir("sweep");
  const std::vector<double> eps{0.05, 0.10, 0.15, 0.20};
  const auto legs = sweep(c, eps, dir.path(), nullptr);
  CHECK(legs.size() == 4);
  const json report = json::parse(slurp(dir / "report.json"));
  CHECK(report["results"].size() == 4);
  CHECK(report["drops"]["image_auroc"].size() == 3);
  CHECK(report["drops"]["pixel_auroc"].size() == 3);
  CHECK(report["results"][2]["epsilon"].get<double>() == 0.15);
  CHECK_THROWS_AS(sweep(c, std::vector<double>{0.1}, dir.path(), nullptr), ConfigError);
}
