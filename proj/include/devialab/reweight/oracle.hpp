#pragma once

#include <span>

#include "devialab/reweight/weights.hpp"

namespace devialab::reweight {

struct Divergence {
  enum Kind { kAlpha, kKl } kind = kKl;
  double alpha = 1.0;  // used by kAlpha, in (0, 1)

  static Divergence kl() { return {kKl, 1.0}; }
  static Divergence alpha_div(double a) { return {kAlpha, a}; }
  double operator()(std::span<const double> w) const;
};

struct OracleOptions {
  int newton_iterations = 2000;
  int bisection_steps = 200;
  double divergence_tol = 1e-13;
};

// Brute-force solution of
//   min_w sum w_i l_i  s.t.  w on the simplex, Div(w, u) <= budget
// by Newton on the penalized objective sum w_i l_i + eta Div(w, u), with
// eta found by bisection so the constraint is active. Returns the best
// feasible point found. Throws ConvergenceError if Newton stalls.
WeightVector oracle_solve(std::span<const double> losses, Divergence div, double budget,
                          const OracleOptions& opts = {});

}  // namespace devialab::reweight
