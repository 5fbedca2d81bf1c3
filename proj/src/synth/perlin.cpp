#include "devialab/synth/perlin.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "devialab/error.hpp"
#include "devialab/rng.hpp"

namespace devialab::synth {
namespace {

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

}  // namespace

PerlinField::PerlinField(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t cell)
    : height_(height), width_(width), cell_(cell) {
  if (cell < 2 || cell > std::min(height, width)) {
    throw DomainError("perlin: cell size " + std::to_string(cell) + " must lie in [2, min(H, W) = " +
                      std::to_string(std::min(height, width)) + "]");
  }
  rows_ = (height + cell - 1) / cell + 1;
  cols_ = (width + cell - 1) / cell + 1;
  Rng rng(mix_seed(seed));
  nodes_.reserve(rows_ * cols_);
  for (std::size_t i = 0; i < rows_ * cols_; ++i) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    nodes_.push_back({std::sin(angle), std::cos(angle)});
  }
}

double PerlinField::sample(double y, double x) const {
  const double fy = y / static_cast<double>(cell_);
  const double fx = x / static_cast<double>(cell_);
  const auto iy = static_cast<std::size_t>(std::floor(fy));
  const auto ix = static_cast<std::size_t>(std::floor(fx));
  const double ty = fy - static_cast<double>(iy);
  const double tx = fx - static_cast<double>(ix);
  auto corner = [&](std::size_t dy, std::size_t dx) {
    const Gradient& g = node(std::min(iy + dy, rows_ - 1), std::min(ix + dx, cols_ - 1));
    return g.gy * (ty - static_cast<double>(dy)) + g.gx * (tx - static_cast<double>(dx));
  };
  const double sy = smoothstep(ty), sx = smoothstep(tx);
  const double top = corner(0, 0) + sx * (corner(0, 1) - corner(0, 0));
  const double bot = corner(1, 0) + sx * (corner(1, 1) - corner(1, 0));
  return std::clamp(top + sy * (bot - top), -1.0, 1.0);
}

diff::Tensor PerlinField::render() const {
  diff::Tensor out(diff::Shape{1, height_, width_});
  for (std::size_t y = 0; y < height_; ++y)
    for (std::size_t x = 0; x < width_; ++x)
      out.at(0, y, x) = sample(static_cast<double>(y), static_cast<double>(x));
  return out;
}

diff::Tensor perlin_field(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t cell) {
  return PerlinField(seed, height, width, cell).render();
}

}  // namespace devialab::synth
