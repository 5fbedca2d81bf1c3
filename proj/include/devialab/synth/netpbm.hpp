#pragma once

#include <filesystem>

#include "devialab/diff/tensor.hpp"

namespace devialab::synth {

// Binary Netpbm I/O. Samples are stored as round(255 * clamp(v, 0, 1)) and
// read back as byte / 255.

// P6, maxval 255. `image` is 3 x H x W.
void write_ppm(const std::filesystem::path& path, const diff::Tensor& image);
diff::Tensor read_ppm(const std::filesystem::path& path);

// P5, maxval 255. `map` is 1 x H x W.
void write_pgm(const std::filesystem::path& path, const diff::Tensor& map);
diff::Tensor read_pgm(const std::filesystem::path& path);

// Quantizes to the same 8-bit grid the writers use.
diff::Tensor quantize8(const diff::Tensor& t);

}  // namespace devialab::synth
