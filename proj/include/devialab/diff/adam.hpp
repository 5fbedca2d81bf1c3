#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "devialab/diff/tensor.hpp"

namespace devialab::diff {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

// Zero moments shaped like `params`.
OptimizerState make_adam_state(std::span<const Tensor> params, AdamConfig config = {});

// One bias-corrected Adam update, in place. `names` (optional, parallel to
// params) labels the offending parameter when a gradient is not finite;
// the parameters and state are left untouched in that case.
void adam_step(OptimizerState& state, std::span<Tensor> params, std::span<const Tensor> grads,
               std::span<const std::string> names = {});

}  // namespace devialab::diff
