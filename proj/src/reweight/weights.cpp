#include "devialab/reweight/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "devialab/error.hpp"

namespace devialab::reweight {
namespace {

WeightVector normalize_log(std::vector<double> logw) {
  const double top = *std::max_element(logw.begin(), logw.end());
  if (!std::isfinite(top)) throw DomainError("reweight: degenerate batch, every weight is zero");
  for (double& v : logw) v = std::exp(v - top);
  // sum in sorted order so permuting the batch permutes the result exactly
  std::vector<double> sorted = logw;
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (double v : sorted) total += v;
  for (double& v : logw) v /= total;
  return logw;
}

void check_losses(std::span<const double> losses) {
  if (losses.empty()) throw ShapeError("reweight: empty batch");
  for (double l : losses) {
    if (!std::isfinite(l)) throw DomainError("reweight: non-finite loss");
  }
}

}  // namespace

WeightVector alpha_weights(std::span<const double> losses, double alpha, double lambda) {
  check_losses(losses);
  if (!(alpha > 0.0) || alpha == 1.0 || !std::isfinite(alpha)) {
    throw DomainError("alpha_weights: alpha must be positive and != 1, got " + std::to_string(alpha));
  }
  if (!(lambda > 0.0)) throw DomainError("alpha_weights: lambda must be positive");
  const double expo = 1.0 / (alpha - 1.0);
  std::vector<double> logw(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const double base = (1.0 - alpha) * losses[i] + lambda;
    logw[i] = base > 0.0 ? expo * std::log(base) : -std::numeric_limits<double>::infinity();
  }
  return normalize_log(std::move(logw));
}

WeightVector kl_weights(std::span<const double> losses, double lambda) {
  check_losses(losses);
  if (!(lambda > 0.0)) throw DomainError("kl_weights: lambda must be positive");
  std::vector<double> logw(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) logw[i] = -losses[i] / lambda;
  return normalize_log(std::move(logw));
}

double alpha_divergence(std::span<const double> w, double alpha) {
  const double n = static_cast<double>(w.size());
  double acc = 0.0;
  for (double v : w) acc += std::pow(n * v, alpha);
  return (acc - n) / (n * alpha * (alpha - 1.0));
}

double kl_divergence(std::span<const double> w) {
  const double n = static_cast<double>(w.size());
  double acc = 0.0;
  for (double v : w) {
    if (v > 0.0) acc += v * std::log(n * v);
  }
  return acc;
}

void write_weight_table(std::ostream& out, std::span<const double> losses, std::span<const double> weights) {
  if (losses.size() != weights.size()) throw ShapeError("weight table: lengths differ");
  const auto old = out.precision(17);
  out << "loss,weight\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out << losses[i] << ',' << weights[i] << '\n';
  out.precision(old);
}

}  // namespace devialab::reweight
