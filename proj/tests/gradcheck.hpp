#pragma once

// Test-only finite-difference oracle shared by the gradient suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "devialab/diff/ops.hpp"

namespace devialab::testing {

inline diff::Tensor random_tensor(diff::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                  double hi = 1.0) {
  diff::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::fabs(analytic - numeric) /
         std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

// Builds a fresh tape for every evaluation: `build(tape, leaves)` receives
// the leaves created from `inputs` and must return a scalar root.
using GraphBuilder = std::function<diff::Var(diff::Tape&, const std::vector<diff::Var>&)>;

inline double eval_scalar(const GraphBuilder& build, const std::vector<diff::Tensor>& inputs) {
  diff::Tape tape(false);
  std::vector<diff::Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.constant(t));
  return build(tape, leaves).value().item();
}

// Largest relative error between the analytic gradient and central
// differences with step h, over every entry of every input.
inline double max_gradient_error(const GraphBuilder& build, std::vector<diff::Tensor> inputs,
                                 double h = 1e-5) {
  diff::Tape tape;
  std::vector<diff::Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.variable(t));
  diff::Var root = build(tape, leaves);
  diff::Gradients grads = tape.backward(root);
  double worst = 0.0;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    const diff::Tensor analytic = grads.of(leaves[a]);
    for (std::size_t i = 0; i < inputs[a].size(); ++i) {
      const double saved = inputs[a][i];
      inputs[a][i] = saved + h;
      const double up = eval_scalar(build, inputs);
      inputs[a][i] = saved - h;
      const double down = eval_scalar(build, inputs);
      inputs[a][i] = saved;
      worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace devialab::testing
