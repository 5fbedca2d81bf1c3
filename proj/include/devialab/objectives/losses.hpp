#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "devialab/diff/ops.hpp"

namespace devialab::objectives {

// Empirical moments of standard-normal reference scores.
struct ReferenceStats {
  double mean = 0.0;
  double stddev = 1.0;  // population form
  std::size_t count = 0;
  std::uint64_t seed = 0;
};

// Draws `count` N(0, 1) samples. Throws DomainError if count < 2 or the
// draw is degenerate.
ReferenceStats reference_stats(std::size_t count, std::uint64_t seed);
ReferenceStats reference_stats_from_samples(std::span<const double> samples, std::uint64_t seed = 0);

double standardize(double s_dev, const ReferenceStats& stats);
diff::Var standardize(const diff::Var& s_dev, const ReferenceStats& stats);

// (1 - p) |z| + p max(0, gamma - z). `p` enters as a constant weight.
double soft_deviation_loss(double z, double p, double gamma);
diff::Var soft_deviation_loss(const diff::Var& z, double p, double gamma);

inline constexpr double kProbClamp = 1e-12;

// -(1 - y) log(1 - p) - y log p with p clamped to [1e-12, 1 - 1e-12].
double bce_loss(double p, int y);
diff::Var bce_loss(const diff::Var& p, int y);

struct FocalParams {
  double gamma = 2.0;
  double alpha = 0.75;  // weight of mask-positive pixels
};

// Pixel mean of -alpha_t (1 - p_t)^gamma log p_t, with p_t = A where M = 1
// and 1 - A elsewhere.
double focal_loss(const diff::Tensor& pred, const diff::Tensor& mask, FocalParams params = {});
diff::Var focal_loss(const diff::Var& pred, const diff::Tensor& mask, FocalParams params = {});

// Per-sample terms of one minibatch.
struct LossBundle {
  std::vector<diff::Var> soft;
  std::vector<diff::Var> bce;
  std::vector<diff::Var> focal;
  std::vector<double> z_std;

  std::size_t size() const noexcept { return soft.size(); }
  std::vector<double> soft_values() const;
  std::vector<double> bce_values() const;
};

// sum_i w1_i l_soft_i + sum_i w2_i l_bce_i + sum_i l_fc_i
diff::Var batch_objective(const LossBundle& bundle, std::span<const double> w1, std::span<const double> w2);

}  // namespace devialab::objectives
