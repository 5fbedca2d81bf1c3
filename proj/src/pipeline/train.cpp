#include "devialab/pipeline/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "devialab/error.hpp"
#include "devialab/objectives/losses.hpp"
#include "devialab/pipeline/infer.hpp"
#include "devialab/reweight/weights.hpp"
#include "devialab/rng.hpp"

namespace devialab::pipeline {

using diff::Tape;
using diff::Tensor;
using diff::Var;

TrainingSet load_training_set(const synth::DatasetManifest& manifest, const std::filesystem::path& data_dir) {
  TrainingSet set;
  for (const synth::RecordEntry* e : manifest.split(synth::Split::kTrain)) {
    synth::SampleRecord s = synth::load_sample(data_dir, *e);
    if (s.label == 0) s.mask.fill(0.0);
    set.entries.push_back(*e);
    set.images.push_back(std::move(s.image));
    set.masks.push_back(std::move(s.mask));
  }
  if (set.size() == 0) throw ConfigError("training split is empty");
  return set;
}

namespace {

reweight::WeightVector divergence_weights(std::span<const double> losses, const TrainingConfig& cfg) {
  return cfg.alpha == 1.0 ? reweight::kl_weights(losses, cfg.lambda)
                          : reweight::alpha_weights(losses, cfg.alpha, cfg.lambda);
}

}  // namespace

Var build_objective(Tape& tape, const model::BoundParams& params, const TrainingSet& data,
                    std::span<const std::size_t> batch, const TrainingConfig& cfg, bool reweight,
                    std::uint64_t reference_seed, BatchLog& log) {
  const auto ref = objectives::reference_stats(cfg.reference_count, reference_seed);
  objectives::LossBundle bundle;
  log.samples.clear();
  log.reweighted = reweight;
  for (std::size_t idx : batch) {
    auto out = model::forward(tape.constant(data.images[idx]), params, cfg.rho);
    Var z = objectives::standardize(out.s_dev, ref);
    const double p = out.p.value().item();
    bundle.soft.push_back(objectives::soft_deviation_loss(z, p, cfg.gamma));
    bundle.bce.push_back(objectives::bce_loss(out.p, data.entries[idx].label));
    bundle.focal.push_back(objectives::focal_loss(out.seg_map, data.masks[idx]));
    bundle.z_std.push_back(z.value().item());

    SampleLog s;
    s.id = data.entries[idx].id;
    s.provenance = data.entries[idx].provenance;
    s.z = bundle.z_std.back();
    s.p = p;
    s.l_soft = bundle.soft.back().value().item();
    s.l_bce = bundle.bce.back().value().item();
    s.l_fc = bundle.focal.back().value().item();
    if (!std::isfinite(s.l_soft) || !std::isfinite(s.l_bce) || !std::isfinite(s.l_fc)) {
      throw TrainingDiverged("non-finite loss at epoch " + std::to_string(log.epoch) + ", batch " +
                             std::to_string(log.batch) + ", sample " + s.id + " (l_soft " + std::to_string(s.l_soft) +
                             ", l_bce " + std::to_string(s.l_bce) + ", l_fc " + std::to_string(s.l_fc) + ")");
    }
    log.samples.push_back(std::move(s));
  }

  const std::size_t n = batch.size();
  std::vector<double> w1(n, 1.0 / static_cast<double>(n)), w2 = w1;
  if (reweight) {
    w1 = divergence_weights(bundle.soft_values(), cfg);
    w2 = divergence_weights(bundle.bce_values(), cfg);
  }
  for (std::size_t i = 0; i < n; ++i) {
    log.samples[i].w1 = w1[i];
    log.samples[i].w2 = w2[i];
  }
  Var objective = objectives::batch_objective(bundle, w1, w2);
  log.objective = objective.value().item();
  return objective;
}

double evaluate_objective(const model::ModelState& state, const TrainingSet& data, std::span<const std::size_t> batch,
                          const TrainingConfig& cfg, bool reweight, std::uint64_t reference_seed) {
  Tape tape(false);
  auto params = model::bind_params(tape, state, false);
  BatchLog log;
  return build_objective(tape, params, data, batch, cfg, reweight, reference_seed, log).value().item();
}

void training_step(model::ModelState& state, diff::OptimizerState& opt, const TrainingSet& data,
                   std::span<const std::size_t> batch, const TrainingConfig& cfg, bool reweight,
                   std::uint64_t reference_seed, BatchLog& log) {
  Tape tape;
  auto params = model::bind_params(tape, state, true);
  Var objective = build_objective(tape, params, data, batch, cfg, reweight, reference_seed, log);
  if (!std::isfinite(log.objective)) {
    throw TrainingDiverged("non-finite objective at epoch " + std::to_string(log.epoch) + ", batch " +
                           std::to_string(log.batch));
  }
  auto grads = tape.backward(objective);
  std::vector<Tensor> g;
  g.reserve(params.vars.size());
  for (const Var& v : params.vars) g.push_back(grads.of(v));
  try {
    diff::adam_step(opt, state.params(), g, state.names());
  } catch (const TrainingDiverged& e) {
    throw TrainingDiverged("epoch " + std::to_string(log.epoch) + ", batch " + std::to_string(log.batch) + ": " +
                           e.what());
  }
}

TrainResult train_model(const RunConfig& config, const TrainingSet& data, const TrainHooks& hooks) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainingConfig& cfg = config.training;
  TrainResult result{model::ModelState::initialize(config.model), {}, {}, {}, 0.0};
  diff::AdamConfig adam;
  adam.learning_rate = cfg.lr;
  auto opt = diff::make_adam_state(result.state.params(), adam);

  std::vector<std::size_t> order(data.size());
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto e0 = std::chrono::steady_clock::now();
    // Uniform over the union: a fresh permutation each epoch.
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, kShuffleStream, epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

    const bool reweight = epoch > cfg.burn_in;
    EpochLog el;
    el.epoch = epoch;
    el.reweighted = reweight;
    std::size_t batches = 0, samples = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      BatchLog log;
      log.epoch = epoch;
      log.batch = batches;
      training_step(result.state, opt, data, batch, cfg, reweight, derive_seed(config.seed, kReferenceStream, step),
                    log);
      el.objective += log.objective;
      for (const SampleLog& s : log.samples) {
        el.l_soft += s.l_soft;
        el.l_bce += s.l_bce;
        el.l_fc += s.l_fc;
      }
      samples += log.samples.size();
      ++batches;
      if (hooks.keep_batches) result.batches.push_back(std::move(log));
    }
    el.objective /= static_cast<double>(batches);
    el.l_soft /= static_cast<double>(samples);
    el.l_bce /= static_cast<double>(samples);
    el.l_fc /= static_cast<double>(samples);
    el.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - e0).count();
    if (hooks.log) {
      *hooks.log << "epoch " << epoch << '/' << cfg.epochs << (reweight ? " reweighted" : " uniform")
                 << " objective " << el.objective << " l_soft " << el.l_soft << " l_bce " << el.l_bce << " l_fc "
                 << el.l_fc << " (" << el.seconds << " s)\n";
    }
    result.epochs.push_back(el);
  }

  if (!result.state.all_finite()) throw TrainingDiverged("parameters became non-finite");
  std::vector<fusion::RawCues> train_scores;
  train_scores.reserve(data.size());
  for (const Tensor& img : data.images) train_scores.push_back(raw_cues(result.state, img, cfg.rho));
  result.calibration = fusion::fit_calibration(train_scores, config.fusion.epsilon);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace devialab::pipeline
