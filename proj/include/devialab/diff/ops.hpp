#pragma once

// Differentiable primitives. Each function computes its result eagerly and
// records a node on the operands' tape with the matching local gradient.

#include <cstddef>
#include <span>
#include <vector>

#include "devialab/diff/tape.hpp"

namespace devialab::diff {

// Elementwise, identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

// 2-D product: [m x k] * [k x n] -> [m x n].
Var matmul(const Var& a, const Var& b);

Var relu(const Var& x);
Var sigmoid(const Var& x);
// Throws DomainError when any entry is <= 0.
Var log(const Var& x);
Var exp(const Var& x);
Var abs(const Var& x);
// scale * x + shift with constant scalars.
Var affine(const Var& x, double scale, double shift);
// Entries outside [lo, hi] are clamped and pass no gradient.
Var clamp(const Var& x, double lo, double hi);

// Reductions to a scalar.
Var sum(const Var& x);
Var mean(const Var& x);

// CHW -> [C]: mean over the spatial dims of each channel.
Var spatial_mean(const Var& x);

// Concatenates CHW tensors with equal H and W along the channel axis.
Var concat_channels(std::span<const Var> parts);

Var reshape(const Var& x, Shape shape);

// input: C x H x W, kernels: O x C x KH x KW, bias: [O] or an invalid Var.
// Output: O x ((H + 2p - KH)/s + 1) x ((W + 2p - KW)/s + 1).
Var conv2d(const Var& input, const Var& kernels, const Var& bias, std::size_t stride,
           std::size_t padding);

// Corner-aligned bilinear resize of a CHW tensor.
Var upsample_bilinear(const Var& x, std::size_t out_h, std::size_t out_w);

// Mean of the k = max(1, ceil(ratio * n)) largest entries of x (flattened).
// Ties are broken towards the lowest flat index.
Var topk_mean(const Var& x, double ratio);

// Number of entries selected by top-k pooling over n values.
std::size_t topk_count(std::size_t n, double ratio);

// Flat indices of the k largest values, ordered by value (desc) then index.
std::vector<std::size_t> topk_indices(std::span<const double> values, std::size_t k);

// Non-recording helper shared with the localization code.
Tensor upsample_bilinear_values(const Tensor& x, std::size_t out_h, std::size_t out_w);

}  // namespace devialab::diff
