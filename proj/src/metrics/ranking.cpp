#include "devialab/metrics/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "devialab/error.hpp"

namespace devialab::metrics {
namespace {

void check_pairs(std::span<const double> scores, std::span<const int> truths) {
  if (scores.size() != truths.size()) {
    throw ShapeError("metrics: " + std::to_string(scores.size()) + " scores vs " + std::to_string(truths.size()) +
                     " labels");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw DomainError("metrics: NaN score");
  }
}

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return idx;
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> truths) {
  check_pairs(scores, truths);
  double pos = 0.0, neg = 0.0;
  for (int t : truths) (t ? pos : neg) += 1.0;
  if (pos == 0.0 || neg == 0.0) throw DomainError("auroc: both classes must be present");

  // Sum of midranks of the positives; ranks are 1-based.
  const auto idx = order_by_score(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double group_pos = 0.0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) group_pos += truths[idx[j++]] ? 1.0 : 0.0;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += group_pos * midrank;
    i = j;
  }
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double auprc(std::span<const double> scores, std::span<const int> truths) {
  check_pairs(scores, truths);
  double pos = 0.0;
  for (int t : truths) pos += t ? 1.0 : 0.0;
  if (pos == 0.0) throw DomainError("auprc: no positives");
  auto idx = order_by_score(scores);
  std::reverse(idx.begin(), idx.end());
  double tp = 0.0, seen = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double group_pos = 0.0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) group_pos += truths[idx[j++]] ? 1.0 : 0.0;
    tp += group_pos;
    seen += static_cast<double>(j - i);
    ap += (group_pos / pos) * (tp / seen);
    i = j;
  }
  return ap;
}

double pixel_auroc(std::span<const diff::Tensor> maps, std::span<const diff::Tensor> masks) {
  if (maps.size() != masks.size()) throw ShapeError("pixel_auroc: map and mask counts differ");
  std::vector<double> scores;
  std::vector<int> truths;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].size() != masks[i].size() || maps[i].shape().back() != masks[i].shape().back()) {
      throw ShapeError("pixel_auroc: map " + std::to_string(i) + " " + diff::shape_str(maps[i].shape()) +
                       " vs mask " + diff::shape_str(masks[i].shape()));
    }
    scores.insert(scores.end(), maps[i].data().begin(), maps[i].data().end());
    for (double m : masks[i].data()) truths.push_back(m > 0.5 ? 1 : 0);
  }
  if (std::find(truths.begin(), truths.end(), 1) == truths.end()) {
    throw DomainError("pixel_auroc: ground truth has no anomalous pixels");
  }
  return auroc(scores, truths);
}

std::vector<DropRow> robustness_table(std::vector<LevelMetric> levels) {
  if (levels.size() < 2) throw DomainError("robustness_table: need at least two contamination levels");
  std::sort(levels.begin(), levels.end(),
            [](const LevelMetric& a, const LevelMetric& b) { return a.epsilon < b.epsilon; });
  std::vector<DropRow> rows;
  for (std::size_t i = 1; i < levels.size(); ++i) {
    const auto& a = levels[i - 1];
    const auto& b = levels[i];
    rows.push_back({a.epsilon, b.epsilon, a.metric, b.metric, 100.0 * (a.metric - b.metric) / a.metric});
  }
  return rows;
}

void write_histogram_csv(std::ostream& out, std::span<const double> scores, std::span<const int> truths,
                         std::size_t bins, double lo, double hi) {
  check_pairs(scores, truths);
  if (bins == 0 || !(hi > lo)) throw DomainError("histogram: need bins > 0 and hi > lo");
  std::vector<std::size_t> nominal(bins, 0), anomalous(bins, 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double pos = std::floor((scores[i] - lo) / width);
    const auto b = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
    ++(truths[i] ? anomalous : nominal)[b];
  }
  const auto old = out.precision(17);
  out << "bin_lo,bin_hi,nominal,anomalous\n";
  for (std::size_t b = 0; b < bins; ++b) {
    out << lo + width * static_cast<double>(b) << ',' << (b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1))
        << ',' << nominal[b] << ',' << anomalous[b] << '\n';
  }
  out.precision(old);
}

}  // namespace devialab::metrics
