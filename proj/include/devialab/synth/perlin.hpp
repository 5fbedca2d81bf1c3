#pragma once

#include <cstdint>
#include <vector>

#include "devialab/diff/tensor.hpp"

namespace devialab::synth {

// Gradient-lattice Perlin noise: one seeded unit gradient per lattice node,
// nodes every `cell` pixels, smoothstep fade between nodes.
class PerlinField {
 public:
  PerlinField(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t cell);

  double sample(double y, double x) const;
  diff::Tensor render() const;  // 1 x H x W

  std::size_t cell() const noexcept { return cell_; }

 private:
  struct Gradient {
    double gy, gx;
  };
  const Gradient& node(std::size_t iy, std::size_t ix) const { return nodes_[iy * cols_ + ix]; }

  std::size_t height_, width_, cell_;
  std::size_t rows_, cols_;
  std::vector<Gradient> nodes_;
};

// Throws DomainError unless 2 <= cell <= min(height, width).
diff::Tensor perlin_field(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t cell);

}  // namespace devialab::synth
