#pragma once

#include <iosfwd>
#include <span>
#include <vector>

namespace devialab::reweight {

// Normalized, non-negative sample weights over one minibatch.
using WeightVector = std::vector<double>;

// w_i proportional to [(1 - alpha) l_i + lambda]_+^(1 / (alpha - 1)), in the
// log domain. Entries whose base is not positive get zero weight; throws
// DomainError when none survive or alpha/lambda are out of range.
WeightVector alpha_weights(std::span<const double> losses, double alpha, double lambda);

// w_i proportional to exp(-l_i / lambda).
WeightVector kl_weights(std::span<const double> losses, double lambda);

// Divergences from the uniform distribution over n entries.
//   alpha: (sum (n w_i)^alpha - n) / (n alpha (alpha - 1))
//   kl:    sum w_i log(n w_i)
double alpha_divergence(std::span<const double> w, double alpha);
double kl_divergence(std::span<const double> w);

// `loss,weight` rows for inspection.
void write_weight_table(std::ostream& out, std::span<const double> losses, std::span<const double> weights);

}  // namespace devialab::reweight
