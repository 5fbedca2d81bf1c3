#pragma once

#include <cstdint>
#include <string_view>

#include "devialab/diff/tensor.hpp"

namespace devialab::synth {

enum class TextureFamily { kStripes, kBlobs, kGrid };

std::string_view family_name(TextureFamily family);
// Throws ConfigError on an unknown name.
TextureFamily parse_family(std::string_view name);

// Deterministic RGB texture (3 x H x W, values in [0, 1]). The seed jitters
// phase, frequency, orientation and palette within the family.
diff::Tensor generate_normal_texture(TextureFamily family, std::uint64_t seed, std::size_t h,
                                     std::size_t w);

// External anomaly source: a texture from a family other than `nominal`,
// with a random palette.
diff::Tensor anomaly_source_texture(TextureFamily nominal, std::uint64_t seed, std::size_t h,
                                    std::size_t w);

// (1 - M) * I_n + beta * (M * I_src) + (1 - beta) * (M * I_n), elementwise.
// `mask` is 1 x H x W and broadcast over the image channels.
diff::Tensor composite_pseudo_anomaly(const diff::Tensor& normal, const diff::Tensor& source,
                                      const diff::Tensor& mask, double beta);

// Binary mask from a thresholded Perlin field. The threshold is drawn from
// [0.3, 0.7] of the field's positive range; redrawn until the mask covers
// between 1% and 40% of the pixels.
diff::Tensor perlin_anomaly_mask(std::uint64_t seed, std::size_t h, std::size_t w);

double mask_fraction(const diff::Tensor& mask);

enum class DefectKind { kStain, kScratch, kStructural };

struct Defect {
  diff::Tensor image;
  diff::Tensor mask;
  DefectKind kind;
};

// Stand-in for a real defect on a normal image: colored stain, thin
// scratch, or a patch whose texture orientation is swapped.
Defect apply_defect(const diff::Tensor& normal, TextureFamily family, std::uint64_t seed);

// Adds N(0, stddev^2) per sample and clamps to [0, 1].
diff::Tensor add_gaussian_noise(const diff::Tensor& image, double stddev, std::uint64_t seed);

}  // namespace devialab::synth
