#include "devialab/model/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "devialab/error.hpp"
#include "devialab/rng.hpp"

namespace devialab::model {

using diff::Shape;
using diff::Tensor;
using diff::Var;

std::string_view pool_name(UncertaintyPool p) {
  switch (p) {
    case UncertaintyPool::kGlobalAverage: return "global_average";
    case UncertaintyPool::kPatchAverage: return "patch_average";
    case UncertaintyPool::kPatchTopk: return "patch_topk";
  }
  return "unknown";
}

UncertaintyPool parse_pool(std::string_view name) {
  for (auto p : {UncertaintyPool::kGlobalAverage, UncertaintyPool::kPatchAverage, UncertaintyPool::kPatchTopk}) {
    if (pool_name(p) == name) return p;
  }
  throw ConfigError("model: unknown uncertainty pool '" + std::string(name) + "'");
}

std::size_t ModelConfig::fused_channels() const {
  return std::accumulate(widths.begin(), widths.end(), std::size_t{0});
}

ModelState::ModelState(const ModelConfig& config) : config_(config) {
  if (config.widths.empty()) throw ConfigError("model: at least one encoder block is required");
  if (config.head_hidden == 0) throw ConfigError("model: head_hidden must be positive");
  if (!(config.input_scale > 0.0) || !std::isfinite(config.input_center)) {
    throw ConfigError("model: input_scale must be positive and input_center finite");
  }
  auto add = [this](std::string name, Shape shape) {
    names_.push_back(std::move(name));
    params_.emplace_back(std::move(shape), 0.0);
  };
  std::size_t in = config.in_channels;
  for (std::size_t b = 0; b < config.widths.size(); ++b) {
    const std::string prefix = "enc" + std::to_string(b + 1);
    add(prefix + ".w", {config.widths[b], in, 3, 3});
    add(prefix + ".b", {config.widths[b]});
    in = config.widths[b];
  }
  const std::size_t c = config.fused_channels(), h = config.head_hidden;
  add("dev1.w", {h, c, 1, 1});
  add("dev1.b", {h});
  add("dev2.w", {1, h, 1, 1});
  add("dev2.b", {1});
  if (config.uncertainty_pool == UncertaintyPool::kGlobalAverage) {
    add("unc1.w", {h, c});
    add("unc1.b", {h, 1});
    add("unc2.w", {1, h});
    add("unc2.b", {1, 1});
  } else {
    add("unc1.w", {h, c, 1, 1});
    add("unc1.b", {h});
    add("unc2.w", {1, h, 1, 1});
    add("unc2.b", {1});
  }
  add("seg1.w", {h, c, 1, 1});
  add("seg1.b", {h});
  add("seg2.w", {1, h, 1, 1});
  add("seg2.b", {1});
}

ModelState ModelState::zeros(const ModelConfig& config) { return ModelState(config); }

ModelState ModelState::initialize(const ModelConfig& config) {
  ModelState s(config);
  Rng rng(mix_seed(config.init_seed));
  for (std::size_t i = 0; i < s.params_.size(); ++i) {
    Tensor& t = s.params_[i];
    if (t.rank() < 2 || s.names_[i].ends_with(".b")) continue;
    const std::size_t fan_in = t.size() / t.dim(0);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
  }
  return s;
}

ModelState ModelState::from_parts(const ModelConfig& config, std::vector<std::string> names,
                                  std::vector<Tensor> params) {
  ModelState s(config);
  if (names != s.names_) throw ShapeError("model: parameter names do not match the architecture");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != s.params_[i].shape()) {
      throw ShapeError("model: parameter " + names[i] + " has shape " + diff::shape_str(params[i].shape()) +
                       ", expected " + diff::shape_str(s.params_[i].shape()));
    }
  }
  s.params_ = std::move(params);
  return s;
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : params_) n += t.size();
  return n;
}

Tensor& ModelState::param(const std::string& name) {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ConfigError("model: no parameter named " + name);
  return params_[static_cast<std::size_t>(it - names_.begin())];
}

const Tensor& ModelState::param(const std::string& name) const {
  return const_cast<ModelState*>(this)->param(name);
}

bool ModelState::all_finite() const {
  return std::all_of(params_.begin(), params_.end(), [](const Tensor& t) { return t.all_finite(); });
}

const Var& BoundParams::operator[](const std::string& name) const {
  const auto& names = state->names();
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ConfigError("model: no parameter named " + name);
  return vars[static_cast<std::size_t>(it - names.begin())];
}

BoundParams bind_params(diff::Tape& tape, const ModelState& state, bool trainable) {
  BoundParams b;
  b.state = &state;
  for (const Tensor& t : state.params()) b.vars.push_back(trainable ? tape.variable(t) : tape.constant(t));
  return b;
}

EncoderOutput encode_fuse(const Var& image, const BoundParams& params) {
  const auto& cfg = params.state->config();
  if (image.value().rank() != 3 || image.value().dim(0) != cfg.in_channels) {
    throw ShapeError("encode_fuse: expected " + std::to_string(cfg.in_channels) + " x H x W image, got " +
                     diff::shape_str(image.shape()));
  }
  EncoderOutput out;
  Var x = diff::affine(image, 1.0 / cfg.input_scale, -cfg.input_center / cfg.input_scale);
  for (std::size_t b = 0; b < cfg.widths.size(); ++b) {
    const std::string prefix = "enc" + std::to_string(b + 1);
    x = diff::relu(diff::conv2d(x, params[prefix + ".w"], params[prefix + ".b"], 2, 1));
    out.blocks.push_back(x);
  }
  const std::size_t h = out.blocks[0].value().dim(1), w = out.blocks[0].value().dim(2);
  std::vector<Var> aligned{out.blocks[0]};
  for (std::size_t b = 1; b < out.blocks.size(); ++b) {
    aligned.push_back(diff::upsample_bilinear(out.blocks[b], h, w));
  }
  out.fused = diff::concat_channels(aligned);
  return out;
}

DeviationOutput deviation_score(const Var& fused, const BoundParams& params, double rho) {
  Var hidden = diff::relu(diff::conv2d(fused, params["dev1.w"], params["dev1.b"], 1, 0));
  Var map = diff::conv2d(hidden, params["dev2.w"], params["dev2.b"], 1, 0);
  Var flat = diff::reshape(map, {map.value().size()});
  return {flat, diff::topk_mean(flat, rho)};
}

Var uncertainty_logit(const Var& fused, const BoundParams& params, double rho) {
  switch (params.state->config().uncertainty_pool) {
    case UncertaintyPool::kGlobalAverage: {
      Var pooled = diff::reshape(diff::spatial_mean(fused), {fused.value().dim(0), 1});
      Var hidden = diff::relu(diff::add(diff::matmul(params["unc1.w"], pooled), params["unc1.b"]));
      Var logit = diff::add(diff::matmul(params["unc2.w"], hidden), params["unc2.b"]);
      return diff::reshape(logit, {});
    }
    case UncertaintyPool::kPatchAverage: {
      Var hidden = diff::relu(diff::conv2d(fused, params["unc1.w"], params["unc1.b"], 1, 0));
      Var pooled = diff::reshape(diff::spatial_mean(hidden), {hidden.value().dim(0), 1, 1});
      Var logit = diff::conv2d(pooled, params["unc2.w"], params["unc2.b"], 1, 0);
      return diff::reshape(logit, {});
    }
    case UncertaintyPool::kPatchTopk: {
      Var hidden = diff::relu(diff::conv2d(fused, params["unc1.w"], params["unc1.b"], 1, 0));
      Var map = diff::conv2d(hidden, params["unc2.w"], params["unc2.b"], 1, 0);
      return diff::reshape(diff::topk_mean(diff::reshape(map, {map.value().size()}), rho), {});
    }
  }
  throw ConfigError("model: unknown uncertainty pool");
}

Var uncertainty_prob(const Var& fused, const BoundParams& params, double rho) {
  return diff::sigmoid(uncertainty_logit(fused, params, rho));
}

Var segmentation_map(const Var& fused, const BoundParams& params, std::size_t out_h, std::size_t out_w) {
  Var hidden = diff::relu(diff::conv2d(fused, params["seg1.w"], params["seg1.b"], 1, 0));
  Var prob = diff::sigmoid(diff::conv2d(hidden, params["seg2.w"], params["seg2.b"], 1, 0));
  return diff::upsample_bilinear(prob, out_h, out_w);
}

ForwardOutput forward(const Var& image, const BoundParams& params, double rho) {
  EncoderOutput enc = encode_fuse(image, params);
  DeviationOutput dev = deviation_score(enc.fused, params, rho);
  Var logit = uncertainty_logit(enc.fused, params, rho);
  Var seg = segmentation_map(enc.fused, params, image.value().dim(1), image.value().dim(2));
  return {image, enc.fused, enc.blocks.back(), dev.patch_scores, dev.s_dev, logit, diff::sigmoid(logit), seg};
}

}  // namespace devialab::model
