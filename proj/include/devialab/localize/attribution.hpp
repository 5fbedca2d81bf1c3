#pragma once

#include <array>
#include <string_view>

#include "devialab/diff/tensor.hpp"
#include "devialab/model/network.hpp"

namespace devialab::localize {

enum class Cue { kDev, kEnt, kSeg };
inline constexpr std::array<Cue, 3> kAllCues{Cue::kDev, Cue::kEnt, Cue::kSeg};
std::string_view cue_name(Cue c);

struct CueAttribution {
  diff::Tensor g_x;  // |d cue / d image|, 3HW
  diff::Tensor g_f;  // |d cue / d last encoder block|
};

// Differentiable cue scalar from one forward pass. The entropy cue goes
// through log(1 + H(p)) on the tape.
diff::Var cue_scalar(const model::ForwardOutput& out, Cue cue, double rho);

// One forward and one backward pass with the parameters frozen.
CueAttribution cue_gradients(const diff::Tensor& image, const model::ModelState& state, Cue cue, double rho);

// In-place min-max to [0, 1]; a flat map becomes all zeros.
void min_max_normalize(diff::Tensor& map);

// Channel-mean |g_x| and upsampled channel-mean |g_F|, averaged and
// normalized. Output is 1 x out_h x out_w.
diff::Tensor cue_map(const CueAttribution& attr, std::size_t out_h, std::size_t out_w);

// Normalized separable Gaussian with radius ceil(3 sigma); sigma = 0 gives {1}.
std::vector<double> gaussian_kernel(double sigma);
// Edge-clamped separable blur of every channel.
diff::Tensor gaussian_blur(const diff::Tensor& map, double sigma);

// Equal average, blur, renormalize.
diff::Tensor fuse_localization(std::span<const diff::Tensor> maps, double sigma);

struct Localization {
  std::array<diff::Tensor, 3> cue_maps;
  diff::Tensor heatmap;  // H, 1HW in [0, 1]
};

Localization localize(const diff::Tensor& image, const model::ModelState& state, double rho, double sigma);

// Binary mask of pixels at or above the q-quantile (nearest rank) of H.
// Pixels at zero never switch on.
diff::Tensor quantile_mask(const diff::Tensor& heatmap, double q);

}  // namespace devialab::localize
