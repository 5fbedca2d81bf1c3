#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "devialab/error.hpp"
#include "devialab/metrics/ranking.hpp"
#include "metric_oracles.hpp"

using namespace devialab;
using namespace devialab::metrics;
using diff::Shape;
using diff::Tensor;
using doctest::Approx;

TEST_CASE("auroc worked examples") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> t{0, 0, 1, 1};
  CHECK(auroc(s, t) == 0.75);
  CHECK(auroc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, t) == 1.0);
  CHECK(auroc(std::vector<double>(4, 0.3), t) == 0.5);
  CHECK_THROWS_AS(auroc(s, std::vector<int>{1, 1, 1, 1}), DomainError);
  CHECK_THROWS_AS(auroc(s, std::vector<int>{1, 0}), ShapeError);
}

TEST_CASE("auprc worked examples") {
  CHECK(auprc(std::vector<double>{0.9, 0.8, 0.7}, std::vector<int>{1, 0, 1}) == Approx(0.5 + 0.5 * 2.0 / 3.0).epsilon(1e-15));
  CHECK(auprc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}) == 1.0);
  CHECK(auprc(std::vector<double>{0.9, 0.8, 0.7, 0.1}, std::vector<int>{0, 0, 0, 1}) == Approx(0.25).epsilon(1e-15));
  // constant scores -> prevalence
  CHECK(auprc(std::vector<double>(5, 0.4), std::vector<int>{1, 0, 1, 0, 0}) == Approx(0.4).epsilon(1e-15));
  CHECK_THROWS_AS(auprc(std::vector<double>{0.1}, std::vector<int>{0}), DomainError);
}

TEST_CASE("pixel auroc") {
  Tensor gt(Shape{1, 2, 2}, std::vector<double>{0, 1, 0, 0});
  Tensor gt2(Shape{1, 2, 2}, std::vector<double>{1, 1, 0, 0});
  const Tensor masks[] = {gt, gt2};
  CHECK(pixel_auroc(masks, masks) == 1.0);
  const Tensor flat[] = {Tensor(Shape{1, 2, 2}, 0.2), Tensor(Shape{1, 2, 2}, 0.2)};
  CHECK(pixel_auroc(flat, masks) == 0.5);
  const Tensor maps[] = {Tensor(Shape{1, 2, 2}, std::vector<double>{0.3, 0.5, 0.1, 0.6}),
                         Tensor(Shape{1, 2, 2}, std::vector<double>{0.7, 0.2, 0.2, 0.0})};
  const std::vector<double> s{0.3, 0.5, 0.1, 0.6, 0.7, 0.2, 0.2, 0.0};
  const std::vector<int> t{0, 1, 0, 0, 1, 1, 0, 0};
  CHECK(pixel_auroc(maps, masks) == Approx(testing::brute_auroc(s, t)).epsilon(1e-15));
  const Tensor clean[] = {Tensor(Shape{1, 2, 2}, 0.0), Tensor(Shape{1, 2, 2}, 0.0)};
  CHECK_THROWS_AS(pixel_auroc(maps, clean), DomainError);
  const Tensor wrong[] = {Tensor(Shape{1, 3, 3}, 0.0), gt};
  CHECK_THROWS_AS(pixel_auroc(maps, wrong), ShapeError);
}

TEST_CASE("brute force agreement") {
  const auto gap = testing::metric_oracle_gap(200, 99);
  CHECK(gap.auroc <= 1e-12);
  CHECK(gap.auprc <= 1e-12);
  CHECK(gap.pixel <= 1e-12);
}

TEST_CASE("auroc properties") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-2, 2);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> s(30), st(30);
    std::vector<int> t(30), flipped(30);
    for (int i = 0; i < 30; ++i) {
      s[i] = d(rng);
      st[i] = std::exp(3.0 * s[i]) + 1.0;
      t[i] = i % 3 == 0;
      flipped[i] = 1 - t[i];
    }
    CHECK(auroc(st, t) == auroc(s, t));
    CHECK(auroc(s, flipped) == Approx(1.0 - auroc(s, t)).epsilon(1e-14));
  }
}

TEST_CASE("robustness table") {
  const auto rows = robustness_table({{0.20, 0.9}, {0.05, 0.95}, {0.10, 0.931}, {0.15, 0.931}});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].eps_from == 0.05);
  CHECK(rows[0].drop_pct == Approx(2.0).epsilon(1e-12));
  CHECK(rows[1].drop_pct == 0.0);
  CHECK(rows[2].drop_pct > 0.0);
  CHECK_THROWS_AS(robustness_table({{0.1, 0.9}}), DomainError);
}

TEST_CASE("histogram csv") {
  std::ostringstream out;
  write_histogram_csv(out, std::vector<double>{0.0, 0.49, 0.5, 1.0, 1.2}, std::vector<int>{0, 0, 1, 1, 1}, 2);
  CHECK(out.str() == "bin_lo,bin_hi,nominal,anomalous\n0,0.5,2,0\n0.5,1,0,3\n");
}
