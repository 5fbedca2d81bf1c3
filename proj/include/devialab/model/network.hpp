#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "devialab/diff/ops.hpp"

namespace devialab::model {

// How the uncertainty head reduces the fused feature map to one logit.
//   global_average: GAP -> affine -> relu -> affine
//   patch_average:  per-location affine -> relu -> GAP -> affine
//   patch_topk:     per-location affine -> relu -> affine, top-k mean of the logits
enum class UncertaintyPool { kGlobalAverage, kPatchAverage, kPatchTopk };
std::string_view pool_name(UncertaintyPool p);
UncertaintyPool parse_pool(std::string_view name);

struct ModelConfig {
  std::size_t in_channels = 3;
  // One conv3x3/stride-2/relu block per entry.
  std::vector<std::size_t> widths{16, 32, 64};
  // Hidden width of each head's single intermediate layer.
  std::size_t head_hidden = 16;
  std::uint64_t init_seed = 1;
  UncertaintyPool uncertainty_pool = UncertaintyPool::kGlobalAverage;
  // Fixed input standardization (x - center) / scale ahead of block 1.
  // Raw [0, 1] pixels train the from-scratch encoder far more slowly.
  double input_center = 0.5;
  double input_scale = 0.25;

  std::size_t fused_channels() const;
  bool operator==(const ModelConfig&) const = default;
};

// Learnable parameters of the encoder and the three heads, in a fixed
// order with stable names.
class ModelState {
 public:
  // He-style fan-in uniform weights, zero biases.
  static ModelState initialize(const ModelConfig& config);
  // Every parameter zero.
  static ModelState zeros(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }
  std::vector<diff::Tensor>& params() noexcept { return params_; }
  const std::vector<diff::Tensor>& params() const noexcept { return params_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t parameter_count() const;

  diff::Tensor& param(const std::string& name);
  const diff::Tensor& param(const std::string& name) const;

  bool all_finite() const;
  friend bool operator==(const ModelState& a, const ModelState& b) {
    return a.config_ == b.config_ && a.names_ == b.names_ && a.params_ == b.params_;
  }

  // Used by the checkpoint loader; validates names and shapes.
  static ModelState from_parts(const ModelConfig& config, std::vector<std::string> names,
                               std::vector<diff::Tensor> params);

 private:
  explicit ModelState(const ModelConfig& config);
  ModelConfig config_;
  std::vector<std::string> names_;
  std::vector<diff::Tensor> params_;
};

// Parameters bound as leaves on one tape, indexed like ModelState::params.
struct BoundParams {
  std::vector<diff::Var> vars;
  const ModelState* state = nullptr;
  const diff::Var& operator[](const std::string& name) const;
};

BoundParams bind_params(diff::Tape& tape, const ModelState& state, bool trainable);

struct EncoderOutput {
  std::vector<diff::Var> blocks;  // per-block activations
  diff::Var fused;                // blocks upsampled to block-1 size, concatenated
};

EncoderOutput encode_fuse(const diff::Var& image, const BoundParams& params);

struct DeviationOutput {
  diff::Var patch_scores;  // flattened over the patch grid
  diff::Var s_dev;
};

DeviationOutput deviation_score(const diff::Var& fused, const BoundParams& params, double rho);
diff::Var uncertainty_logit(const diff::Var& fused, const BoundParams& params, double rho);
diff::Var uncertainty_prob(const diff::Var& fused, const BoundParams& params, double rho);
// Sigmoid map upsampled to out_h x out_w (1 x H x W).
diff::Var segmentation_map(const diff::Var& fused, const BoundParams& params, std::size_t out_h,
                           std::size_t out_w);

// Everything the training loop and the attribution code need from one pass.
struct ForwardOutput {
  diff::Var image;
  diff::Var fused;
  diff::Var last_block;  // kept for feature-level attribution
  diff::Var patch_scores;
  diff::Var s_dev;
  diff::Var logit;
  diff::Var p;
  diff::Var seg_map;
};

ForwardOutput forward(const diff::Var& image, const BoundParams& params, double rho);

}  // namespace devialab::model
