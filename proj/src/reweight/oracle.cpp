#include "devialab/reweight/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "devialab/error.hpp"

namespace devialab::reweight {

double Divergence::operator()(std::span<const double> w) const {
  return kind == kKl ? kl_divergence(w) : alpha_divergence(w, alpha);
}

namespace {

struct Penalized {
  std::span<const double> l;
  Divergence div;
  double eta;
  double n;

  double value(std::span<const double> w) const {
    double lin = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) lin += w[i] * l[i];
    return lin + eta * div(w);
  }
  // gradient and diagonal Hessian of the penalized objective
  void derivs(std::span<const double> w, std::vector<double>& g, std::vector<double>& h) const {
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (div.kind == Divergence::kKl) {
        g[i] = l[i] + eta * (std::log(n * w[i]) + 1.0);
        h[i] = eta / w[i];
      } else {
        const double a = div.alpha;
        const double c = eta * std::pow(n, a - 1.0);
        g[i] = l[i] + c * std::pow(w[i], a - 1.0) / (a - 1.0);
        h[i] = c * std::pow(w[i], a - 2.0);
      }
    }
  }
};

// Equality-constrained Newton from the uniform point; every iterate stays
// strictly inside the simplex.
std::vector<double> minimize_penalized(const Penalized& f, const OracleOptions& opts) {
  const std::size_t n = f.l.size();
  std::vector<double> w(n, 1.0 / static_cast<double>(n)), g(n), h(n), step(n), trial(n);
  double fw = f.value(w);
  double decrement = 0.0;
  for (int it = 0; it < opts.newton_iterations; ++it) {
    f.derivs(w, g, h);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num += g[i] / h[i];
      den += 1.0 / h[i];
    }
    const double mu = -num / den;
    decrement = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      step[i] = -(g[i] + mu) / h[i];
      decrement += h[i] * step[i] * step[i];
    }
    if (decrement < 1e-24) return w;
    // fraction to the boundary
    double t = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (step[i] < 0.0) t = std::min(t, -0.99 * w[i] / step[i]);
    }
    // Near the optimum f can no longer resolve the decrease; take the full
    // (boundary-clamped) step there, where Newton converges quadratically.
    const bool local = decrement < 1e-8 * (1.0 + std::fabs(fw));
    double ft = 0.0;
    for (int ls = 0; ls < 80; ++ls, t *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = w[i] + t * step[i];
      ft = f.value(trial);
      if (local || ft <= fw - 0.25 * t * decrement) break;
    }
    if (!local && !(ft < fw)) break;
    double total = 0.0;
    for (double v : trial) total += v;
    for (std::size_t i = 0; i < n; ++i) w[i] = trial[i] / total;
    fw = f.value(w);
  }
  throw ConvergenceError("oracle_solve: Newton did not converge (eta " + std::to_string(f.eta) +
                         ", decrement " + std::to_string(decrement) + ")");
}

}  // namespace

WeightVector oracle_solve(std::span<const double> losses, Divergence div, double budget, const OracleOptions& opts) {
  const std::size_t n = losses.size();
  if (n == 0) throw ShapeError("oracle_solve: empty batch");
  if (!(budget >= 0.0)) throw DomainError("oracle_solve: budget must be >= 0");
  if (div.kind == Divergence::kAlpha && !(div.alpha > 0.0 && div.alpha < 1.0)) {
    throw DomainError("oracle_solve: alpha must lie in (0, 1)");
  }
  const WeightVector uniform(n, 1.0 / static_cast<double>(n));
  if (budget == 0.0 || n == 1) return uniform;

  // Unconstrained optimum: all mass on the minimum loss (split across ties).
  const double lmin = *std::min_element(losses.begin(), losses.end());
  WeightVector vertex(n, 0.0);
  const auto ties = static_cast<double>(std::count(losses.begin(), losses.end(), lmin));
  for (std::size_t i = 0; i < n; ++i) vertex[i] = losses[i] == lmin ? 1.0 / ties : 0.0;
  if (div(vertex) <= budget) return vertex;

  const double nd = static_cast<double>(n);
  auto solve = [&](double eta) { return minimize_penalized(Penalized{losses, div, eta, nd}, opts); };

  // Larger eta -> smaller divergence. Grow a bracket from eta = 1 in log
  // space, then bisect.
  double lo = 0.0, hi = 0.0;
  WeightVector best = solve(1.0);
  if (div(best) <= budget) {
    do {
      hi = lo;
      lo -= std::log(4.0);
      if (lo < -200.0) return best;
      WeightVector w = solve(std::exp(lo));
      if (div(w) > budget) break;
      best = std::move(w);
    } while (true);
  } else {
    do {
      lo = hi;
      hi += std::log(4.0);
      if (hi > 200.0) throw ConvergenceError("oracle_solve: could not bracket the budget");
      best = solve(std::exp(hi));
    } while (div(best) > budget);
  }
  for (int it = 0; it < opts.bisection_steps && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    WeightVector w = solve(std::exp(mid));
    const double d = div(w);
    if (d <= budget) {
      hi = mid;
      best = std::move(w);
      if (budget - d <= opts.divergence_tol * std::max(1.0, budget)) break;
    } else {
      lo = mid;
    }
  }
  return best;
}

}  // namespace devialab::reweight
