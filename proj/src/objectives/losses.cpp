#include "devialab/objectives/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "devialab/error.hpp"
#include "devialab/rng.hpp"

namespace devialab::objectives {

using diff::Shape;
using diff::Tensor;
using diff::Var;

ReferenceStats reference_stats_from_samples(std::span<const double> samples, std::uint64_t seed) {
  if (samples.size() < 2) throw DomainError("reference_stats: need at least 2 samples");
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var /= static_cast<double>(samples.size());
  if (!(var > 0.0)) throw DomainError("reference_stats: degenerate draw, sigma = 0");
  return {mean, std::sqrt(var), samples.size(), seed};
}

ReferenceStats reference_stats(std::size_t count, std::uint64_t seed) {
  if (count < 2) throw DomainError("reference_stats: count must be >= 2");
  Rng rng(mix_seed(seed));
  std::vector<double> draws(count);
  for (double& d : draws) d = rng.normal();
  return reference_stats_from_samples(draws, seed);
}

double standardize(double s_dev, const ReferenceStats& stats) { return (s_dev - stats.mean) / stats.stddev; }

Var standardize(const Var& s_dev, const ReferenceStats& stats) {
  return diff::affine(s_dev, 1.0 / stats.stddev, -stats.mean / stats.stddev);
}

double soft_deviation_loss(double z, double p, double gamma) {
  return (1.0 - p) * std::fabs(z) + p * std::max(0.0, gamma - z);
}

Var soft_deviation_loss(const Var& z, double p, double gamma) {
  Var inlier = diff::affine(diff::abs(z), 1.0 - p, 0.0);
  Var outlier = diff::affine(diff::relu(diff::affine(z, -1.0, gamma)), p, 0.0);
  return diff::add(inlier, outlier);
}

double bce_loss(double p, int y) {
  p = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return -(1.0 - y) * std::log(1.0 - p) - y * std::log(p);
}

Var bce_loss(const Var& p, int y) {
  if (y != 0 && y != 1) throw DomainError("bce_loss: label must be 0 or 1");
  Var clamped = diff::clamp(p, kProbClamp, 1.0 - kProbClamp);
  if (y == 1) return diff::affine(diff::log(clamped), -1.0, 0.0);
  return diff::affine(diff::log(diff::affine(clamped, -1.0, 1.0)), -1.0, 0.0);
}

namespace {

void check_focal_shapes(const Tensor& pred, const Tensor& mask) {
  if (pred.shape() != mask.shape()) {
    throw ShapeError("focal_loss: prediction " + diff::shape_str(pred.shape()) + " vs mask " +
                     diff::shape_str(mask.shape()));
  }
  if (pred.size() == 0) throw ShapeError("focal_loss: empty map");
}

}  // namespace

double focal_loss(const Tensor& pred, const Tensor& mask, FocalParams fp) {
  check_focal_shapes(pred, mask);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double a = std::clamp(pred[i], kProbClamp, 1.0 - kProbClamp);
    const bool pos = mask[i] > 0.5;
    const double pt = pos ? a : 1.0 - a;
    const double at = pos ? fp.alpha : 1.0 - fp.alpha;
    acc += -at * std::pow(1.0 - pt, fp.gamma) * std::log(pt);
  }
  return acc / static_cast<double>(pred.size());
}

Var focal_loss(const Var& pred, const Tensor& mask, FocalParams fp) {
  check_focal_shapes(pred.value(), mask);
  const double value = focal_loss(pred.value(), mask, fp);
  return pred.tape().record(
      diff::OpKind::kCustom, Tensor::scalar(value), {pred}, [mask, fp](const diff::BackwardArgs& args) {
        const Tensor& a_in = *args.inputs[0];
        Tensor& g = *args.grad_inputs[0];
        const double scale = args.grad_output[0] / static_cast<double>(a_in.size());
        for (std::size_t i = 0; i < a_in.size(); ++i) {
          const double raw = a_in[i];
          if (raw < kProbClamp || raw > 1.0 - kProbClamp) continue;
          const bool pos = mask[i] > 0.5;
          const double pt = pos ? raw : 1.0 - raw;
          const double at = pos ? fp.alpha : 1.0 - fp.alpha;
          const double q = 1.0 - pt;
          // d/dpt of -at q^g log pt
          const double dpt = at * (fp.gamma * std::pow(q, fp.gamma - 1.0) * std::log(pt) - std::pow(q, fp.gamma) / pt);
          g[i] += scale * (pos ? dpt : -dpt);
        }
      });
}

std::vector<double> LossBundle::soft_values() const {
  std::vector<double> v;
  for (const Var& s : soft) v.push_back(s.value().item());
  return v;
}

std::vector<double> LossBundle::bce_values() const {
  std::vector<double> v;
  for (const Var& s : bce) v.push_back(s.value().item());
  return v;
}

Var batch_objective(const LossBundle& b, std::span<const double> w1, std::span<const double> w2) {
  const std::size_t n = b.size();
  if (n == 0) throw ShapeError("batch_objective: empty batch");
  if (b.bce.size() != n || b.focal.size() != n || w1.size() != n || w2.size() != n) {
    throw ShapeError("batch_objective: weight/loss lengths differ (soft " + std::to_string(n) + ", bce " +
                     std::to_string(b.bce.size()) + ", focal " + std::to_string(b.focal.size()) + ", w1 " +
                     std::to_string(w1.size()) + ", w2 " + std::to_string(w2.size()) + ")");
  }
  Var total;
  auto accumulate = [&total](const Var& term) { total = total.valid() ? diff::add(total, term) : term; };
  for (std::size_t i = 0; i < n; ++i) {
    accumulate(diff::affine(b.soft[i], w1[i], 0.0));
    accumulate(diff::affine(b.bce[i], w2[i], 0.0));
    accumulate(b.focal[i]);
  }
  return total;
}

}  // namespace devialab::objectives
