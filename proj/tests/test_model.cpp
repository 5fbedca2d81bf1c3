#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "devialab/error.hpp"
#include "devialab/model/checkpoint.hpp"
#include "devialab/model/network.hpp"
#include "gradcheck.hpp"

using namespace devialab;
using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;
namespace fs = std::filesystem;

namespace {

Tensor random_image(std::size_t res, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return testing::random_tensor({3, res, res}, rng, 0.0, 1.0);
}

}  // namespace

TEST_CASE("shape contract across resolutions") {
  const auto state = model::ModelState::initialize({});
  for (std::size_t res : {32u, 64u, 128u}) {
    CAPTURE(res);
    Tape tape(false);
    auto params = model::bind_params(tape, state, false);
    auto out = model::forward(tape.constant(random_image(res, res)), params, 0.1);
    CHECK(out.fused.shape() == Shape{112, res / 2, res / 2});
    CHECK(out.last_block.shape() == Shape{64, res / 8, res / 8});
    CHECK(out.patch_scores.shape() == Shape{res * res / 4});
    CHECK(out.s_dev.value().size() == 1);
    CHECK(out.p.value().size() == 1);
    CHECK(out.seg_map.shape() == Shape{1, res, res});
    const double p = out.p.value().item();
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    for (double a : out.seg_map.value().data()) {
      CHECK(a > 0.0);
      CHECK(a < 1.0);
    }
  }
}

TEST_CASE("encode_fuse") {
  const auto state = model::ModelState::initialize({});
  SUBCASE("an image at the input center with zero biases gives zero features") {
    Tape tape(false);
    auto params = model::bind_params(tape, state, false);
    const double c = state.config().input_center;
    auto enc = model::encode_fuse(tape.constant(Tensor(Shape{3, 64, 64}, c)), params);
    for (double v : enc.fused.value().data()) CHECK(v == 0.0);
  }
  SUBCASE("input standardization is a fixed affine map") {
    model::ModelConfig raw;
    raw.input_center = 0.0;
    raw.input_scale = 1.0;
    const auto plain = model::ModelState::from_parts(raw, state.names(), state.params());
    std::mt19937_64 rng(5);
    const Tensor img = testing::random_tensor({3, 32, 32}, rng, 0.0, 1.0);
    Tensor shifted = img;
    for (double& v : shifted.data()) v = (v - 0.5) / 0.25;
    Tape tape(false);
    auto a = model::encode_fuse(tape.constant(img), model::bind_params(tape, state, false));
    auto b = model::encode_fuse(tape.constant(shifted), model::bind_params(tape, plain, false));
    for (std::size_t i = 0; i < a.fused.value().size(); ++i) {
      CHECK(a.fused.value()[i] == doctest::Approx(b.fused.value()[i]).epsilon(1e-12));
    }
    model::ModelConfig bad;
    bad.input_scale = 0.0;
    CHECK_THROWS_AS(model::ModelState::initialize(bad), ConfigError);
  }
  SUBCASE("deterministic") {
    Tape t1(false), t2(false);
    const auto s2 = model::ModelState::initialize({});
    CHECK(state == s2);
    auto e1 = model::encode_fuse(t1.constant(random_image(64, 3)), model::bind_params(t1, state, false));
    auto e2 = model::encode_fuse(t2.constant(random_image(64, 3)), model::bind_params(t2, s2, false));
    CHECK(e1.fused.value() == e2.fused.value());
  }
  SUBCASE("wrong channel count") {
    Tape tape(false);
    auto params = model::bind_params(tape, state, false);
    CHECK_THROWS_AS(model::encode_fuse(tape.constant(Tensor(Shape{1, 64, 64})), params), ShapeError);
  }
}

TEST_CASE("deviation_score") {
  const auto state = model::ModelState::initialize({});
  Tape tape(false);
  auto params = model::bind_params(tape, state, false);
  auto enc = model::encode_fuse(tape.constant(random_image(64, 4)), params);
  auto full = model::deviation_score(enc.fused, params, 1.0);
  CHECK(full.s_dev.value().item() == doctest::Approx(diff::mean(full.patch_scores).value().item()).epsilon(1e-12));
  CHECK(full.patch_scores.value().size() == 1024);
  CHECK(diff::topk_count(1024, 0.1) == 103);

  auto top = model::deviation_score(enc.fused, params, 0.1);
  Tensor psi = top.patch_scores.value();
  const auto chosen = diff::topk_indices(psi.data(), 103);
  Tensor bumped = psi;
  bumped[chosen[50]] += 0.01;
  CHECK(diff::topk_mean(tape.constant(bumped), 0.1).value().item() > top.s_dev.value().item());
}

TEST_CASE("uncertainty head") {
  auto state = model::ModelState::zeros({});
  Tape tape(false);
  {
    auto params = model::bind_params(tape, state, false);
    auto fused = tape.constant(Tensor(Shape{112, 32, 32}, 0.3));
    CHECK(model::uncertainty_prob(fused, params, 0.1).value().item() == 0.5);
  }
  state.param("unc2.b")[0] = 10.0;
  auto params = model::bind_params(tape, state, false);
  auto fused = tape.constant(Tensor(Shape{112, 32, 32}, 0.3));
  CHECK(model::uncertainty_prob(fused, params, 0.1).value().item() > 0.9999);
}

TEST_CASE("segmentation head") {
  const auto zero = model::ModelState::zeros({});
  Tape tape(false);
  auto params = model::bind_params(tape, zero, false);
  auto fused = tape.constant(Tensor(Shape{112, 32, 32}, 0.7));
  auto seg = model::segmentation_map(fused, params, 64, 64);
  CHECK(seg.shape() == Shape{1, 64, 64});
  for (double v : seg.value().data()) CHECK(v == 0.5);
}

TEST_CASE("end-to-end gradients w.r.t. the image match finite differences") {
  const auto state = model::ModelState::initialize({3, {16, 32, 64}, 16, 5});
  const Tensor image = random_image(32, 21);
  const double rho = 0.1;
  enum Cue { kDev, kProb, kSeg };
  auto scalar = [&](Tape& tape, const Var& img, Cue cue) {
    auto params = model::bind_params(tape, state, false);
    auto out = model::forward(img, params, rho);
    if (cue == kDev) return out.s_dev;
    if (cue == kProb) return out.p;
    return diff::topk_mean(out.seg_map, rho);
  };
  std::mt19937_64 rng(2);
  for (Cue cue : {kDev, kProb, kSeg}) {
    CAPTURE(static_cast<int>(cue));
    Tape tape;
    Var img = tape.variable(image);
    Tensor grad = tape.backward(scalar(tape, img, cue)).of(img);
    for (int k = 0; k < 5; ++k) {
      const std::size_t idx = rng() % image.size();
      const double h = 1e-5;
      Tensor up = image, down = image;
      up[idx] += h;
      down[idx] -= h;
      Tape tu(false), td(false);
      const double fu = scalar(tu, tu.constant(up), cue).value().item();
      const double fd = scalar(td, td.constant(down), cue).value().item();
      CHECK(testing::relative_error(grad[idx], (fu - fd) / (2 * h)) <= 1e-3);
    }
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const auto state = model::ModelState::initialize({3, {8, 8, 8}, 4, 99});
  fs::path dir = fs::temp_directory_path() / "devialab_ckpt";
  fs::create_directories(dir);
  nlohmann::json extra{{"calibration", {{"dev", {-1.0, 2.5}}}}};
  model::save_checkpoint(dir / "a.ckpt", state, extra);
  auto loaded = model::load_checkpoint(dir / "a.ckpt");
  CHECK(loaded.state == state);
  CHECK(loaded.extra == extra);

  std::ifstream in(dir / "a.ckpt", std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  CHECK(std::string(magic, 8) == "DEVIALB1");

  model::save_checkpoint(dir / "b.ckpt", loaded.state, loaded.extra);
  std::ifstream a(dir / "a.ckpt", std::ios::binary), b(dir / "b.ckpt", std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);

  {
    std::ofstream bad(dir / "bad.ckpt", std::ios::binary);
    bad << "NOTACKPTxxxxxxxx";
  }
  CHECK_THROWS_AS(model::load_checkpoint(dir / "bad.ckpt"), IoError);
  CHECK_THROWS_AS(model::load_checkpoint(dir / "missing.ckpt"), IoError);
}

TEST_CASE("parameter bookkeeping") {
  const auto state = model::ModelState::initialize({});
  CHECK(state.names().size() == state.params().size());
  CHECK(state.all_finite());
  // enc: 16*27+16 + 32*144+32 + 64*288+64; heads: 2*(16*112+16+16+1) + (16*112+16+16+1)
  CHECK(state.parameter_count() == 448 + 4640 + 18496 + 3 * (1792 + 16 + 16 + 1));
  CHECK(state.param("enc1.b").size() == 16);
  CHECK_THROWS_AS(state.param("nope"), ConfigError);
}
