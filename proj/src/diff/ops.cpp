#include "devialab/diff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "devialab/error.hpp"
#include "devialab/simd.hpp"

namespace devialab::diff {
namespace {

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": operand shapes differ, lhs " + shape_str(a.shape()) +
                     " vs rhs " + shape_str(b.shape()));
  }
}

void require_rank(const char* op, const char* operand, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + operand + " must have rank " +
                     std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

// Applies f elementwise and records a node whose local derivative is
// df(x, y) with x the input and y the output.
template <typename F, typename DF>
Var unary(OpKind kind, const Var& x, F f, DF df) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return x.tape().record(kind, std::move(out), {x}, [df](const BackwardArgs& a) {
    const Tensor& in = *a.inputs[0];
    Tensor& g = *a.grad_inputs[0];
    for (std::size_t i = 0; i < in.size(); ++i) {
      g[i] += a.grad_output[i] * df(in[i], a.output[i]);
    }
  });
}

struct ConvGeometry {
  std::size_t c, h, w, o, kh, kw, stride, pad, oh, ow;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t positions() const { return oh * ow; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

void im2col(const ConvGeometry& g, const double* in, double* cols) {
  const std::size_t p = g.positions();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* row = cols + ((c * g.kh + ky) * g.kw + kx) * p;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          double* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = in + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w))
                          ? 0.0
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* in) {
  const std::size_t p = g.positions();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* row = cols + ((c * g.kh + ky) * g.kw + kx) * p;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = in + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const double* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) {
              dst[static_cast<std::size_t>(ix)] += src[ox];
            }
          }
        }
      }
    }
  }
}

struct BilinearTap {
  std::size_t i0, i1;
  double frac;
};

std::vector<BilinearTap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<BilinearTap> taps(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double pos = out > 1 ? static_cast<double>(o) * static_cast<double>(in - 1) /
                                     static_cast<double>(out - 1)
                               : 0.0;
    std::size_t i0 = static_cast<std::size_t>(std::floor(pos));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, pos - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  simd::active().add(a.value().raw(), b.value().raw(), out.raw(), out.size());
  return a.tape().record(OpKind::kAdd, std::move(out), {a, b}, [](const BackwardArgs& args) {
    const auto& kt = simd::active();
    for (Tensor* g : args.grad_inputs) {
      if (g) kt.axpy(1.0, args.grad_output.raw(), g->raw(), g->size());
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return a.tape().record(OpKind::kSub, std::move(out), {a, b}, [](const BackwardArgs& args) {
    const auto& kt = simd::active();
    if (Tensor* g = args.grad_inputs[0]) kt.axpy(1.0, args.grad_output.raw(), g->raw(), g->size());
    if (Tensor* g = args.grad_inputs[1]) kt.axpy(-1.0, args.grad_output.raw(), g->raw(), g->size());
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  simd::active().mul(a.value().raw(), b.value().raw(), out.raw(), out.size());
  return a.tape().record(OpKind::kMul, std::move(out), {a, b}, [](const BackwardArgs& args) {
    const Tensor& go = args.grad_output;
    for (std::size_t side = 0; side < 2; ++side) {
      Tensor* g = args.grad_inputs[side];
      if (!g) continue;
      const Tensor& other = *args.inputs[1 - side];
      for (std::size_t i = 0; i < go.size(); ++i) (*g)[i] += go[i] * other[i];
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank("matmul", "lhs", av, 2);
  require_rank("matmul", "rhs", bv, 2);
  if (av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: inner dimensions differ, lhs " + shape_str(av.shape()) + " vs rhs " +
                     shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out(Shape{m, n});
  simd::gemm_nn(simd::active(), m, n, k, av.raw(), bv.raw(), out.raw());
  return a.tape().record(OpKind::kMatmul, std::move(out), {a, b},
                         [m, k, n](const BackwardArgs& args) {
                           const auto& kt = simd::active();
                           const Tensor& go = args.grad_output;
                           // dA = G * B^T, dB = A^T * G
                           if (Tensor* ga = args.grad_inputs[0]) {
                             simd::gemm_nt(kt, m, k, n, go.raw(), args.inputs[1]->raw(), ga->raw());
                           }
                           if (Tensor* gb = args.grad_inputs[1]) {
                             simd::gemm_tn(kt, k, n, m, args.inputs[0]->raw(), go.raw(), gb->raw());
                           }
                         });
}

Var relu(const Var& x) {
  return unary(
      OpKind::kRelu, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
  return unary(
      OpKind::kSigmoid, x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var log(const Var& x) {
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (!(xv[i] > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(xv[i]) + " at index " +
                        std::to_string(i));
    }
  }
  return unary(
      OpKind::kLog, x, [](double v) { return std::log(v); },
      [](double in, double) { return 1.0 / in; });
}

Var exp(const Var& x) {
  return unary(
      OpKind::kExp, x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var abs(const Var& x) {
  return unary(
      OpKind::kAbs, x, [](double v) { return std::fabs(v); },
      [](double in, double) { return in > 0.0 ? 1.0 : (in < 0.0 ? -1.0 : 0.0); });
}

Var affine(const Var& x, double scale, double shift) {
  return unary(
      OpKind::kAffine, x, [scale, shift](double v) { return scale * v + shift; },
      [scale](double, double) { return scale; });
}

Var clamp(const Var& x, double lo, double hi) {
  return unary(
      OpKind::kClamp, x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double in, double) { return (in >= lo && in <= hi) ? 1.0 : 0.0; });
}

Var sum(const Var& x) {
  const double total = simd::active().sum(x.value().raw(), x.value().size());
  return x.tape().record(OpKind::kSum, Tensor::scalar(total), {x}, [](const BackwardArgs& args) {
    Tensor& g = *args.grad_inputs[0];
    const double go = args.grad_output[0];
    for (double& v : g.data()) v += go;
  });
}

Var mean(const Var& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean: empty input");
  const double total = simd::active().sum(x.value().raw(), n);
  return x.tape().record(OpKind::kMean, Tensor::scalar(total / static_cast<double>(n)), {x},
                         [n](const BackwardArgs& args) {
                           Tensor& g = *args.grad_inputs[0];
                           const double go = args.grad_output[0] / static_cast<double>(n);
                           for (double& v : g.data()) v += go;
                         });
}

Var spatial_mean(const Var& x) {
  const Tensor& xv = x.value();
  require_rank("spatial_mean", "input", xv, 3);
  const std::size_t c = xv.dim(0), hw = xv.dim(1) * xv.dim(2);
  Tensor out(Shape{c});
  const auto& kt = simd::active();
  for (std::size_t i = 0; i < c; ++i) out[i] = kt.sum(xv.raw() + i * hw, hw) / static_cast<double>(hw);
  return x.tape().record(OpKind::kSpatialMean, std::move(out), {x},
                         [c, hw](const BackwardArgs& args) {
                           Tensor& g = *args.grad_inputs[0];
                           for (std::size_t i = 0; i < c; ++i) {
                             const double go = args.grad_output[i] / static_cast<double>(hw);
                             double* row = g.raw() + i * hw;
                             for (std::size_t j = 0; j < hw; ++j) row[j] += go;
                           }
                         });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no operands");
  const Tensor& first = parts[0].value();
  require_rank("concat_channels", "operand 0", first, 3);
  std::size_t channels = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& t = parts[i].value();
    require_rank("concat_channels", ("operand " + std::to_string(i)).c_str(), t, 3);
    if (t.dim(1) != first.dim(1) || t.dim(2) != first.dim(2)) {
      throw ShapeError("concat_channels: operand " + std::to_string(i) + " has spatial shape " +
                       shape_str(t.shape()) + ", expected " + shape_str(first.shape()));
    }
    channels += t.dim(0);
  }
  Tensor out(Shape{channels, first.dim(1), first.dim(2)});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& t = p.value();
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += t.size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(OpKind::kConcatChannels, std::move(out), std::move(inputs),
                                [](const BackwardArgs& args) {
                                  std::size_t off = 0;
                                  for (std::size_t i = 0; i < args.inputs.size(); ++i) {
                                    const std::size_t n = args.inputs[i]->size();
                                    if (Tensor* g = args.grad_inputs[i]) {
                                      simd::active().axpy(1.0, args.grad_output.raw() + off, g->raw(), n);
                                    }
                                    off += n;
                                  }
                                });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(OpKind::kReshape, std::move(out), {x}, [](const BackwardArgs& args) {
    Tensor& g = *args.grad_inputs[0];
    simd::active().axpy(1.0, args.grad_output.raw(), g.raw(), g.size());
  });
}

Var conv2d(const Var& input, const Var& kernels, const Var& bias, std::size_t stride,
           std::size_t padding) {
  const Tensor& in = input.value();
  const Tensor& ker = kernels.value();
  require_rank("conv2d", "input", in, 3);
  require_rank("conv2d", "kernels", ker, 4);
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (ker.dim(1) != in.dim(0)) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(ker.dim(1)) +
                     " input channels, input " + shape_str(in.shape()) + " has " +
                     std::to_string(in.dim(0)));
  }
  ConvGeometry g{in.dim(0), in.dim(1), in.dim(2), ker.dim(0), ker.dim(2), ker.dim(3),
                 stride,    padding,   0,         0};
  if (g.kh > g.h + 2 * padding || g.kw > g.w + 2 * padding) {
    throw ShapeError("conv2d: kernel " + shape_str(ker.shape()) + " larger than padded input " +
                     shape_str(in.shape()));
  }
  g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
  g.ow = (g.w + 2 * padding - g.kw) / stride + 1;
  const bool has_bias = bias.valid();
  if (has_bias && bias.value().size() != g.o) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match " +
                     std::to_string(g.o) + " output channels");
  }

  const auto& kt = simd::active();
  const std::size_t p = g.positions();
  Tensor out(Shape{g.o, g.oh, g.ow});
  if (has_bias) {
    for (std::size_t o = 0; o < g.o; ++o) std::fill_n(out.raw() + o * p, p, bias.value()[o]);
  }
  if (g.pointwise()) {
    simd::gemm_nn(kt, g.o, p, g.patch(), ker.raw(), in.raw(), out.raw());
  } else {
    std::vector<double> cols(g.patch() * p);
    im2col(g, in.raw(), cols.data());
    simd::gemm_nn(kt, g.o, p, g.patch(), ker.raw(), cols.data(), out.raw());
  }

  std::vector<Var> inputs{input, kernels};
  if (has_bias) inputs.push_back(bias);
  return input.tape().record(
      OpKind::kConv2d, std::move(out), std::move(inputs), [g](const BackwardArgs& args) {
        const auto& k = simd::active();
        const std::size_t pos = g.positions();
        const Tensor& go = args.grad_output;
        const Tensor& in_v = *args.inputs[0];
        const Tensor& ker_v = *args.inputs[1];
        std::vector<double> cols;
        const double* colp = in_v.raw();
        if (!g.pointwise()) {
          cols.resize(g.patch() * pos);
          if (args.grad_inputs[1]) im2col(g, in_v.raw(), cols.data());
          colp = cols.data();
        }
        if (Tensor* gk = args.grad_inputs[1]) {
          simd::gemm_nt(k, g.o, g.patch(), pos, go.raw(), colp, gk->raw());
        }
        if (args.grad_inputs.size() > 2) {
          if (Tensor* gb = args.grad_inputs[2]) {
            for (std::size_t o = 0; o < g.o; ++o) (*gb)[o] += k.sum(go.raw() + o * pos, pos);
          }
        }
        if (Tensor* gi = args.grad_inputs[0]) {
          if (g.pointwise()) {
            simd::gemm_tn(k, g.patch(), pos, g.o, ker_v.raw(), go.raw(), gi->raw());
          } else {
            std::fill(cols.begin(), cols.end(), 0.0);
            simd::gemm_tn(k, g.patch(), pos, g.o, ker_v.raw(), go.raw(), cols.data());
            col2im_add(g, cols.data(), gi->raw());
          }
        }
      });
}

Tensor upsample_bilinear_values(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 3) throw ShapeError("upsample_bilinear: input must be CHW, got " + shape_str(x.shape()));
  if (out_h == 0 || out_w == 0) throw ShapeError("upsample_bilinear: target size must be >= 1");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto ty = bilinear_taps(h, out_h);
  const auto tx = bilinear_taps(w, out_w);
  Tensor out(Shape{c, out_h, out_w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < out_h; ++y) {
      const auto& a = ty[y];
      for (std::size_t xo = 0; xo < out_w; ++xo) {
        const auto& b = tx[xo];
        const double top = (1.0 - b.frac) * x.at(ch, a.i0, b.i0) + b.frac * x.at(ch, a.i0, b.i1);
        const double bot = (1.0 - b.frac) * x.at(ch, a.i1, b.i0) + b.frac * x.at(ch, a.i1, b.i1);
        out.at(ch, y, xo) = (1.0 - a.frac) * top + a.frac * bot;
      }
    }
  }
  return out;
}

Var upsample_bilinear(const Var& x, std::size_t out_h, std::size_t out_w) {
  Tensor out = upsample_bilinear_values(x.value(), out_h, out_w);
  return x.tape().record(
      OpKind::kUpsampleBilinear, std::move(out), {x}, [out_h, out_w](const BackwardArgs& args) {
        const Tensor& in = *args.inputs[0];
        Tensor& g = *args.grad_inputs[0];
        const std::size_t c = in.dim(0);
        const auto ty = bilinear_taps(in.dim(1), out_h);
        const auto tx = bilinear_taps(in.dim(2), out_w);
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t y = 0; y < out_h; ++y) {
            const auto& a = ty[y];
            for (std::size_t xo = 0; xo < out_w; ++xo) {
              const auto& b = tx[xo];
              const double go = args.grad_output.at(ch, y, xo);
              g.at(ch, a.i0, b.i0) += go * (1.0 - a.frac) * (1.0 - b.frac);
              g.at(ch, a.i0, b.i1) += go * (1.0 - a.frac) * b.frac;
              g.at(ch, a.i1, b.i0) += go * a.frac * (1.0 - b.frac);
              g.at(ch, a.i1, b.i1) += go * a.frac * b.frac;
            }
          }
        }
      });
}

std::size_t topk_count(std::size_t n, double ratio) {
  if (n == 0) throw ShapeError("topk: empty input");
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw DomainError("topk: ratio must lie in (0, 1], got " + std::to_string(ratio));
  }
  const auto k = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n);
}

std::vector<std::size_t> topk_indices(std::span<const double> values, std::size_t k) {
  std::vector<std::size_t> idx(values.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  auto before = [&values](std::size_t a, std::size_t b) {
    return values[a] > values[b] || (values[a] == values[b] && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
  idx.resize(k);
  return idx;
}

Var topk_mean(const Var& x, double ratio) {
  const Tensor& xv = x.value();
  const std::size_t k = topk_count(xv.size(), ratio);
  std::vector<std::size_t> chosen = topk_indices(xv.data(), k);
  double acc = 0.0;
  for (std::size_t i : chosen) acc += xv[i];
  return x.tape().record(OpKind::kTopkMean, Tensor::scalar(acc / static_cast<double>(k)), {x},
                         [chosen = std::move(chosen)](const BackwardArgs& args) {
                           Tensor& g = *args.grad_inputs[0];
                           const double share =
                               args.grad_output[0] / static_cast<double>(chosen.size());
                           for (std::size_t i : chosen) g[i] += share;
                         });
}

}  // namespace devialab::diff
