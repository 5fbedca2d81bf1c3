#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "devialab/diff/tensor.hpp"

namespace devialab::metrics {

// Mann-Whitney AUROC with midranks for ties. Throws DomainError unless
// both classes are present.
double auroc(std::span<const double> scores, std::span<const int> truths);

// Average precision over descending thresholds; tied scores form one
// threshold. Throws DomainError without positives.
double auprc(std::span<const double> scores, std::span<const int> truths);

// Pools every pixel of every map into one set. Masks are binarized at 0.5.
double pixel_auroc(std::span<const diff::Tensor> maps, std::span<const diff::Tensor> masks);

struct DropRow {
  double eps_from = 0.0;
  double eps_to = 0.0;
  double metric_from = 0.0;
  double metric_to = 0.0;
  double drop_pct = 0.0;  // 100 (from - to) / from
};

struct LevelMetric {
  double epsilon = 0.0;
  double metric = 0.0;
};

// Drops between consecutive levels, ordered by epsilon.
std::vector<DropRow> robustness_table(std::vector<LevelMetric> levels);

// bin_lo,bin_hi,nominal,anomalous over `bins` equal bins of [lo, hi];
// out-of-range scores land in the edge bins.
void write_histogram_csv(std::ostream& out, std::span<const double> scores, std::span<const int> truths,
                         std::size_t bins = 20, double lo = 0.0, double hi = 1.0);

}  // namespace devialab::metrics
