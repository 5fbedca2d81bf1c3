#include "devialab/diff/adam.hpp"

#include <cmath>

#include "devialab/error.hpp"

namespace devialab::diff {

OptimizerState make_adam_state(std::span<const Tensor> params, AdamConfig config) {
  OptimizerState state;
  state.config = config;
  for (const Tensor& p : params) {
    state.first_moment.emplace_back(p.shape(), 0.0);
    state.second_moment.emplace_back(p.shape(), 0.0);
  }
  return state;
}

void adam_step(OptimizerState& state, std::span<Tensor> params, std::span<const Tensor> grads,
               std::span<const std::string> names) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params, " +
                     std::to_string(grads.size()) + " grads, " +
                     std::to_string(state.first_moment.size()) + " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string label = i < names.size() ? names[i] : "param#" + std::to_string(i);
    if (params[i].shape() != grads[i].shape() ||
        params[i].shape() != state.first_moment[i].shape()) {
      throw ShapeError("adam_step: shape mismatch for " + label + ", param " +
                       shape_str(params[i].shape()) + " vs grad " + shape_str(grads[i].shape()));
    }
    if (!grads[i].all_finite()) {
      throw TrainingDiverged("non-finite gradient for parameter " + label + " at step " +
                             std::to_string(state.step + 1));
    }
  }

  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

}  // namespace devialab::diff
