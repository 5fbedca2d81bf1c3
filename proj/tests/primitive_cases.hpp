#pragma once

// One finite-difference case per differentiable primitive. Shared by the
// unit suite and the acceptance gate.

#include <random>
#include <string>
#include <vector>

#include "gradcheck.hpp"

namespace devialab::testing {

struct PrimitiveCase {
  std::string name;
  std::vector<diff::Shape> shapes;
  double lo = -1.0;
  double hi = 1.0;
  // Maps the leaves to a (possibly non-scalar) op result.
  std::function<diff::Var(const std::vector<diff::Var>&)> op;
};

inline std::vector<PrimitiveCase> primitive_cases() {
  using diff::Var;
  using V = std::vector<Var>;
  return {
      {"add", {{2, 3}, {2, 3}}, -1, 1, [](const V& v) { return diff::add(v[0], v[1]); }},
      {"sub", {{2, 3}, {2, 3}}, -1, 1, [](const V& v) { return diff::sub(v[0], v[1]); }},
      {"mul", {{2, 3}, {2, 3}}, -1, 1, [](const V& v) { return diff::mul(v[0], v[1]); }},
      {"matmul", {{2, 3}, {3, 4}}, -1, 1, [](const V& v) { return diff::matmul(v[0], v[1]); }},
      {"relu", {{10}}, -1, 1, [](const V& v) { return diff::relu(v[0]); }},
      {"sigmoid", {{10}}, -3, 3, [](const V& v) { return diff::sigmoid(v[0]); }},
      {"log", {{10}}, 0.2, 2, [](const V& v) { return diff::log(v[0]); }},
      {"exp", {{10}}, -1, 1, [](const V& v) { return diff::exp(v[0]); }},
      {"abs", {{10}}, -1, 1, [](const V& v) { return diff::abs(v[0]); }},
      {"affine", {{10}}, -1, 1, [](const V& v) { return diff::affine(v[0], -1.7, 0.3); }},
      {"clamp", {{10}}, -1, 1, [](const V& v) { return diff::clamp(v[0], -0.5, 0.5); }},
      {"sum", {{2, 5}}, -1, 1, [](const V& v) { return diff::sum(v[0]); }},
      {"mean", {{2, 5}}, -1, 1, [](const V& v) { return diff::mean(v[0]); }},
      {"spatial_mean", {{3, 2, 4}}, -1, 1, [](const V& v) { return diff::spatial_mean(v[0]); }},
      {"concat_channels", {{1, 2, 3}, {2, 2, 3}}, -1, 1,
       [](const V& v) { return diff::concat_channels(v); }},
      {"reshape", {{2, 6}}, -1, 1, [](const V& v) { return diff::reshape(v[0], {3, 4}); }},
      {"conv2d", {{2, 5, 5}, {3, 2, 3, 3}, {3}}, -1, 1,
       [](const V& v) { return diff::conv2d(v[0], v[1], v[2], 2, 1); }},
      {"conv2d_pointwise", {{4, 3, 3}, {2, 4, 1, 1}, {2}}, -1, 1,
       [](const V& v) { return diff::conv2d(v[0], v[1], v[2], 1, 0); }},
      {"upsample_bilinear", {{2, 3, 2}, }, -1, 1,
       [](const V& v) { return diff::upsample_bilinear(v[0], 5, 4); }},
      {"topk_mean", {{12}}, -1, 1, [](const V& v) { return diff::topk_mean(v[0], 0.3); }},
  };
}

// Random projection to a scalar so every output entry carries weight.
inline GraphBuilder scalarized(const PrimitiveCase& pc, std::uint64_t seed) {
  return [pc, seed](diff::Tape& tape, const std::vector<diff::Var>& leaves) {
    diff::Var out = pc.op(leaves);
    std::mt19937_64 rng(seed);
    diff::Var weights = tape.constant(random_tensor(out.shape(), rng));
    return diff::sum(diff::mul(out, weights));
  };
}

// Worst relative error over `trials` random draws of the case's inputs.
inline double primitive_worst_error(const PrimitiveCase& pc, int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::vector<diff::Tensor> inputs;
    for (const auto& s : pc.shapes) inputs.push_back(random_tensor(s, rng, pc.lo, pc.hi));
    worst = std::max(worst, max_gradient_error(scalarized(pc, rng()), inputs));
  }
  return worst;
}

}  // namespace devialab::testing
