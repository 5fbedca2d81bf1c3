#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "devialab/error.hpp"
#include "devialab/fusion/cues.hpp"
#include "devialab/localize/attribution.hpp"
#include "cue_fd.hpp"
#include "gradcheck.hpp"

using namespace devialab;
using namespace devialab::localize;
using diff::Shape;
using diff::Tensor;
using doctest::Approx;

namespace {

Tensor random_image(std::size_t res, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return testing::random_tensor({3, res, res}, rng, 0.0, 1.0);
}

double max_of(const Tensor& t) { return *std::max_element(t.data().begin(), t.data().end()); }
double min_of(const Tensor& t) { return *std::min_element(t.data().begin(), t.data().end()); }

}  // namespace

TEST_CASE("entropy cue on the tape matches the scalar formula") {
  const auto state = model::ModelState::initialize({3, {8, 8, 8}, 8, 4});
  diff::Tape tape(false);
  auto params = model::bind_params(tape, state, false);
  auto out = model::forward(tape.constant(random_image(16, 1)), params, 0.1);
  CHECK(cue_scalar(out, Cue::kEnt, 0.1).value().item() ==
        Approx(fusion::entropy_score(out.p.value().item())).epsilon(1e-13));
  CHECK(cue_scalar(out, Cue::kSeg, 0.1).value().item() ==
        Approx(fusion::seg_topk_score(out.seg_map.value(), 0.1)).epsilon(1e-13));
}

TEST_CASE("cue gradients match finite differences") {
  const auto state = model::ModelState::initialize({3, {8, 12, 16}, 8, 11});
  const Tensor img = random_image(32, 2);
  for (Cue c : kAllCues) {
    CAPTURE(cue_name(c));
    CHECK(testing::cue_fd_error(img, state, c, 0.1, 5, 17) <= 1e-3);
  }
}

TEST_CASE("attributions are non-negative and shaped") {
  const auto state = model::ModelState::initialize({3, {8, 12, 16}, 8, 3});
  const Tensor img = random_image(32, 3);
  for (Cue c : kAllCues) {
    auto a = cue_gradients(img, state, c, 0.1);
    CHECK(a.g_x.shape() == img.shape());
    CHECK(a.g_f.shape() == Shape{16, 4, 4});
    CHECK(min_of(a.g_x) >= 0.0);
    CHECK(min_of(a.g_f) >= 0.0);
    CHECK(max_of(a.g_x) > 0.0);
  }
}

TEST_CASE("constant model gives zero attribution and zero maps") {
  const auto state = model::ModelState::zeros({3, {8, 8, 8}, 8, 1});
  const Tensor img = random_image(16, 4);
  for (Cue c : kAllCues) {
    auto a = cue_gradients(img, state, c, 0.1);
    CHECK(max_of(a.g_x) == 0.0);
    CHECK(max_of(a.g_f) == 0.0);
    CHECK(max_of(cue_map(a, 16, 16)) == 0.0);
  }
}

TEST_CASE("cue map range and footprint") {
  CueAttribution a{Tensor(Shape{3, 16, 16}, 0.0), Tensor(Shape{4, 4, 4}, 0.0)};
  a.g_f[1 * 16 + 2 * 4 + 1] = 5.0;  // channel 1, row 2, col 1
  const Tensor m = cue_map(a, 16, 16);
  CHECK(max_of(m) == 1.0);
  CHECK(min_of(m) == 0.0);
  // corner-aligned 4 -> 16: source row 2 sits at 2 * 15 / 3 = 10, col 1 at 5
  const auto argmax = static_cast<std::size_t>(std::max_element(m.data().begin(), m.data().end()) - m.data().begin());
  CHECK(argmax / 16 == 10);
  CHECK(argmax % 16 == 5);
  CHECK(m.at(0, 0, 0) == 0.0);

  std::mt19937_64 rng(5);
  CueAttribution r{testing::random_tensor({3, 16, 16}, rng, 0, 1), testing::random_tensor({4, 4, 4}, rng, 0, 1)};
  const Tensor rm = cue_map(r, 16, 16);
  CHECK(max_of(rm) == 1.0);
  CHECK(min_of(rm) == 0.0);
}

TEST_CASE("gaussian kernel and blur") {
  for (double s : {0.5, 1.0, 2.5, 4.0}) {
    const auto k = gaussian_kernel(s);
    CHECK(k.size() == 2 * static_cast<std::size_t>(std::ceil(3 * s)) + 1);
    CHECK(std::fabs(std::accumulate(k.begin(), k.end(), 0.0) - 1.0) < 1e-12);
    CHECK(std::equal(k.begin(), k.end(), k.rbegin()));
  }
  CHECK(gaussian_kernel(0.0) == std::vector<double>{1.0});
  const Tensor c(Shape{1, 20, 20}, 0.3);
  const Tensor b = gaussian_blur(c, 4.0);
  for (double v : b.data()) CHECK(std::fabs(v - 0.3) < 1e-12);

  Tensor spike(Shape{1, 21, 21}, 0.0);
  spike[10 * 21 + 10] = 1.0;
  const Tensor sb = gaussian_blur(spike, 1.0);
  CHECK(std::accumulate(sb.data().begin(), sb.data().end(), 0.0) == Approx(1.0).epsilon(1e-12));
  CHECK(sb.at(0, 10, 10) == max_of(sb));
  CHECK_THROWS_AS(gaussian_kernel(-1.0), DomainError);
}

TEST_CASE("fuse localization") {
  std::mt19937_64 rng(6);
  const Tensor a = testing::random_tensor({1, 16, 16}, rng, 0, 1);
  const Tensor b = testing::random_tensor({1, 16, 16}, rng, 0, 1);
  const Tensor c = testing::random_tensor({1, 16, 16}, rng, 0, 1);

  const Tensor same[] = {a, a, a};
  Tensor expect = gaussian_blur(a, 2.0);
  min_max_normalize(expect);
  const Tensor got = fuse_localization(same, 2.0);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == Approx(expect[i]).epsilon(1e-12));

  const Tensor abc[] = {a, b, c}, cab[] = {c, a, b};
  const Tensor f1 = fuse_localization(abc, 4.0), f2 = fuse_localization(cab, 4.0);
  for (std::size_t i = 0; i < f1.size(); ++i) CHECK(std::fabs(f1[i] - f2[i]) < 1e-12);
  CHECK(max_of(f1) == 1.0);
  CHECK(min_of(f1) == 0.0);

  Tensor plain(Shape{1, 16, 16}, 0.0);
  for (std::size_t i = 0; i < plain.size(); ++i) plain[i] = (a[i] + b[i] + c[i]) / 3.0;
  min_max_normalize(plain);
  const Tensor f0 = fuse_localization(abc, 0.0);
  for (std::size_t i = 0; i < f0.size(); ++i) CHECK(f0[i] == Approx(plain[i]).epsilon(1e-12));

  const Tensor flat[] = {Tensor(Shape{1, 8, 8}, 0.4), Tensor(Shape{1, 8, 8}, 0.4), Tensor(Shape{1, 8, 8}, 0.4)};
  CHECK(max_of(fuse_localization(flat, 4.0)) == 0.0);
  const Tensor misaligned[] = {a, Tensor(Shape{1, 8, 8}, 0.0)};
  CHECK_THROWS_AS(fuse_localization(misaligned, 1.0), ShapeError);
}

TEST_CASE("localize end to end") {
  const auto state = model::ModelState::initialize({3, {8, 12, 16}, 8, 7});
  const Tensor img = random_image(32, 8);
  const auto l1 = localize::localize(img, state, 0.1, 4.0);
  const auto l2 = localize::localize(img, state, 0.1, 4.0);
  CHECK(l1.heatmap.shape() == Shape{1, 32, 32});
  CHECK(l1.heatmap == l2.heatmap);
  CHECK(min_of(l1.heatmap) >= 0.0);
  CHECK(max_of(l1.heatmap) <= 1.0);
}

TEST_CASE("quantile mask") {
  Tensor h(Shape{1, 10, 10}, 0.0);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = static_cast<double>(i) / 99.0;
  const Tensor m = quantile_mask(h, 0.95);
  CHECK(std::accumulate(m.data().begin(), m.data().end(), 0.0) == 6.0);  // ranks 95..100
  CHECK(m[99] == 1.0);
  CHECK(m[93] == 0.0);
  const Tensor none = quantile_mask(Tensor(Shape{1, 4, 4}, 0.0), 0.95);
  CHECK(std::accumulate(none.data().begin(), none.data().end(), 0.0) == 0.0);
}
