#include "devialab/localize/attribution.hpp"

#include <algorithm>
#include <cmath>

#include "devialab/error.hpp"
#include "devialab/objectives/losses.hpp"

namespace devialab::localize {

using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;

std::string_view cue_name(Cue c) {
  switch (c) {
    case Cue::kDev: return "dev";
    case Cue::kEnt: return "ent";
    case Cue::kSeg: return "seg";
  }
  return "unknown";
}

Var cue_scalar(const model::ForwardOutput& out, Cue cue, double rho) {
  switch (cue) {
    case Cue::kDev:
      return out.s_dev;
    case Cue::kEnt: {
      const double c = objectives::kProbClamp;
      Var p = diff::clamp(out.p, c, 1.0 - c);
      Var q = diff::affine(p, -1.0, 1.0);
      Var h = diff::add(diff::mul(p, diff::log(p)), diff::mul(q, diff::log(q)));
      return diff::log(diff::affine(h, -1.0, 1.0));
    }
    case Cue::kSeg:
      return diff::topk_mean(out.seg_map, rho);
  }
  throw DomainError("unknown cue");
}

CueAttribution cue_gradients(const Tensor& image, const model::ModelState& state, Cue cue, double rho) {
  Tape tape;
  Var x = tape.variable(image);
  auto params = model::bind_params(tape, state, false);
  auto out = model::forward(x, params, rho);
  Var s = cue_scalar(out, cue, rho);
  const Var retain[] = {out.last_block};
  auto grads = tape.backward(s, retain);
  CueAttribution a{grads.of(x), grads.of(out.last_block)};
  for (double& v : a.g_x.data()) v = std::fabs(v);
  for (double& v : a.g_f.data()) v = std::fabs(v);
  return a;
}

void min_max_normalize(Tensor& map) {
  if (map.size() == 0) return;
  const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
  const double mn = *lo, mx = *hi;
  if (!(mx > mn)) {
    map.fill(0.0);
    return;
  }
  for (double& v : map.data()) v = (v - mn) / (mx - mn);
}

namespace {

Tensor channel_mean(const Tensor& t) {
  if (t.rank() != 3) throw ShapeError("channel_mean: expected CHW, got " + diff::shape_str(t.shape()));
  const std::size_t c = t.dim(0), hw = t.dim(1) * t.dim(2);
  Tensor out(Shape{1, t.dim(1), t.dim(2)}, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) out[i] += t[ch * hw + i];
  for (double& v : out.data()) v /= static_cast<double>(c);
  return out;
}

}  // namespace

Tensor cue_map(const CueAttribution& attr, std::size_t out_h, std::size_t out_w) {
  Tensor m1 = channel_mean(attr.g_x);
  if (m1.dim(1) != out_h || m1.dim(2) != out_w) m1 = diff::upsample_bilinear_values(m1, out_h, out_w);
  const Tensor m2 = diff::upsample_bilinear_values(channel_mean(attr.g_f), out_h, out_w);
  for (std::size_t i = 0; i < m1.size(); ++i) m1[i] = 0.5 * (m1[i] + m2[i]);
  min_max_normalize(m1);
  return m1;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma >= 0.0)) throw DomainError("gaussian_kernel: sigma must be >= 0");
  if (sigma == 0.0) return {1.0};
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (double& v : k) v /= total;
  return k;
}

Tensor gaussian_blur(const Tensor& map, double sigma) {
  if (map.rank() != 3) throw ShapeError("gaussian_blur: expected CHW");
  const auto k = gaussian_kernel(sigma);
  if (k.size() == 1) return map;
  const auto r = static_cast<std::ptrdiff_t>(k.size() / 2);
  const auto c = map.dim(0);
  const auto h = static_cast<std::ptrdiff_t>(map.dim(1)), w = static_cast<std::ptrdiff_t>(map.dim(2));
  auto clampi = [](std::ptrdiff_t v, std::ptrdiff_t n) { return std::clamp<std::ptrdiff_t>(v, 0, n - 1); };
  Tensor tmp(map.shape(), 0.0), out(map.shape(), 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const std::size_t base = ch * static_cast<std::size_t>(h * w);
    for (std::ptrdiff_t y = 0; y < h; ++y)
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t d = -r; d <= r; ++d)
          acc += k[static_cast<std::size_t>(d + r)] * map[base + static_cast<std::size_t>(y * w + clampi(x + d, w))];
        tmp[base + static_cast<std::size_t>(y * w + x)] = acc;
      }
    for (std::ptrdiff_t y = 0; y < h; ++y)
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t d = -r; d <= r; ++d)
          acc += k[static_cast<std::size_t>(d + r)] * tmp[base + static_cast<std::size_t>(clampi(y + d, h) * w + x)];
        out[base + static_cast<std::size_t>(y * w + x)] = acc;
      }
  }
  return out;
}

Tensor fuse_localization(std::span<const Tensor> maps, double sigma) {
  if (maps.empty()) throw ShapeError("fuse_localization: no maps");
  Tensor avg(maps[0].shape(), 0.0);
  for (const Tensor& m : maps) {
    if (m.shape() != avg.shape()) throw ShapeError("fuse_localization: maps are not aligned");
    for (std::size_t i = 0; i < m.size(); ++i) avg[i] += m[i];
  }
  for (double& v : avg.data()) v /= static_cast<double>(maps.size());
  Tensor out = gaussian_blur(avg, sigma);
  min_max_normalize(out);
  return out;
}

Localization localize(const Tensor& image, const model::ModelState& state, double rho, double sigma) {
  Localization loc;
  const std::size_t h = image.dim(1), w = image.dim(2);
  for (std::size_t c = 0; c < kAllCues.size(); ++c) {
    loc.cue_maps[c] = cue_map(cue_gradients(image, state, kAllCues[c], rho), h, w);
  }
  loc.heatmap = fuse_localization(loc.cue_maps, sigma);
  return loc;
}

Tensor quantile_mask(const Tensor& heatmap, double q) {
  if (!(q > 0.0 && q <= 1.0)) throw DomainError("quantile_mask: q must lie in (0, 1]");
  std::vector<double> sorted(heatmap.data().begin(), heatmap.data().end());
  std::sort(sorted.begin(), sorted.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  const double thr = sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
  Tensor mask(heatmap.shape(), 0.0);
  for (std::size_t i = 0; i < heatmap.size(); ++i) mask[i] = heatmap[i] >= thr && heatmap[i] > 0.0 ? 1.0 : 0.0;
  return mask;
}

}  // namespace devialab::localize
