#pragma once

// Quadratic reference implementations for the ranking metrics.

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "devialab/metrics/ranking.hpp"

namespace devialab::testing {

inline double brute_auroc(std::span<const double> s, std::span<const int> t) {
  double hits = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!t[i] || t[j]) continue;
      pairs += 1.0;
      hits += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  return hits / pairs;
}

// Threshold sweep: one operating point per distinct score, descending.
inline double brute_auprc(std::span<const double> s, std::span<const int> t) {
  std::vector<double> thr(s.begin(), s.end());
  std::sort(thr.begin(), thr.end(), std::greater<>());
  thr.erase(std::unique(thr.begin(), thr.end()), thr.end());
  double pos = 0.0;
  for (int v : t) pos += v;
  double ap = 0.0, prev_recall = 0.0;
  for (double th : thr) {
    double tp = 0.0, called = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= th) {
        called += 1.0;
        tp += t[i];
      }
    }
    const double recall = tp / pos;
    ap += (recall - prev_recall) * (tp / called);
    prev_recall = recall;
  }
  return ap;
}

struct OracleGap {
  double auroc = 0.0;
  double auprc = 0.0;
  double pixel = 0.0;
};

// Worst disagreement over `instances` random sets (size <= 50, coarse
// score grid so ties are common).
inline OracleGap metric_oracle_gap(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  OracleGap gap;
  for (int k = 0; k < instances; ++k) {
    const std::size_t n = 2 + rng() % 49;
    const bool coarse = k % 2 == 0;
    std::vector<double> s(n);
    std::vector<int> t(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse ? static_cast<double>(rng() % 7) / 7.0 : std::uniform_real_distribution<double>(0, 1)(rng);
      t[i] = static_cast<int>(rng() % 2);
    }
    t[0] = 1;
    t[1] = 0;
    gap.auroc = std::max(gap.auroc, std::fabs(metrics::auroc(s, t) - brute_auroc(s, t)));
    gap.auprc = std::max(gap.auprc, std::fabs(metrics::auprc(s, t) - brute_auprc(s, t)));

    // same pixels split across two maps
    const std::size_t half = n / 2;
    diff::Tensor m1(diff::Shape{1, 1, half}), m2(diff::Shape{1, 1, n - half});
    diff::Tensor g1(diff::Shape{1, 1, half}), g2(diff::Shape{1, 1, n - half});
    for (std::size_t i = 0; i < n; ++i) {
      (i < half ? m1 : m2)[i < half ? i : i - half] = s[i];
      (i < half ? g1 : g2)[i < half ? i : i - half] = t[i];
    }
    const diff::Tensor maps[] = {m1, m2}, masks[] = {g1, g2};
    gap.pixel = std::max(gap.pixel, std::fabs(metrics::pixel_auroc(maps, masks) - brute_auroc(s, t)));
  }
  return gap;
}

}  // namespace devialab::testing
