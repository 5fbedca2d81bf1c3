#include "devialab/synth/textures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "devialab/error.hpp"
#include "devialab/rng.hpp"
#include "devialab/synth/perlin.hpp"

namespace devialab::synth {
namespace {

using Color = std::array<double, 3>;
using diff::Shape;
using diff::Tensor;

struct Palette {
  Color low, high;
};

Color jitter(const Color& c, Rng& rng, double amount) {
  Color out;
  for (std::size_t i = 0; i < 3; ++i) out[i] = std::clamp(c[i] + rng.uniform(-amount, amount), 0.0, 1.0);
  return out;
}

Color random_color(Rng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

Palette default_palette(TextureFamily family, Rng& rng) {
  switch (family) {
    case TextureFamily::kStripes:
      return {jitter({0.20, 0.35, 0.55}, rng, 0.04), jitter({0.75, 0.80, 0.70}, rng, 0.04)};
    case TextureFamily::kBlobs:
      return {jitter({0.55, 0.45, 0.30}, rng, 0.04), jitter({0.85, 0.75, 0.55}, rng, 0.04)};
    case TextureFamily::kGrid:
      return {jitter({0.35, 0.35, 0.40}, rng, 0.04), jitter({0.80, 0.80, 0.82}, rng, 0.04)};
  }
  return {};
}

void paint(Tensor& img, std::size_t y, std::size_t x, const Palette& p, double t) {
  t = std::clamp(t, 0.0, 1.0);
  for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = p.low[c] + (p.high[c] - p.low[c]) * t;
}

std::size_t cell_at_least_2(std::size_t v) { return std::max<std::size_t>(2, v); }

// Renders one family with the given palette. `rng` drives geometry jitter.
Tensor render(TextureFamily family, const Palette& pal, Rng& rng, std::size_t h, std::size_t w) {
  Tensor img(Shape{3, h, w});
  const double size = static_cast<double>(std::min(h, w));
  switch (family) {
    case TextureFamily::kStripes: {
      const double period = size / 8.0 * rng.uniform(0.92, 1.08);
      const double angle = rng.uniform(-0.08, 0.08);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const PerlinField shade(rng.next(), h, w, cell_at_least_2(std::min(h, w) / 2));
      const double ca = std::cos(angle), sa = std::sin(angle);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double u = static_cast<double>(x) * ca + static_cast<double>(y) * sa;
          const double s = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * u / period + phase);
          paint(img, y, x, pal, s + 0.06 * shade.sample(static_cast<double>(y), static_cast<double>(x)));
        }
      break;
    }
    case TextureFamily::kBlobs: {
      const PerlinField coarse(rng.next(), h, w, cell_at_least_2(std::min(h, w) / 4));
      const PerlinField fine(rng.next(), h, w, cell_at_least_2(std::min(h, w) / 8));
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double fy = static_cast<double>(y), fx = static_cast<double>(x);
          paint(img, y, x, pal, 0.5 + 0.9 * coarse.sample(fy, fx) + 0.4 * fine.sample(fy, fx));
        }
      break;
    }
    case TextureFamily::kGrid: {
      const double spacing = size / 8.0 * rng.uniform(0.92, 1.08);
      const double oy = rng.uniform(0.0, spacing), ox = rng.uniform(0.0, spacing);
      const double thickness = std::max(1.5, size / 32.0);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double dy = std::fmod(static_cast<double>(y) + oy, spacing);
          const double dx = std::fmod(static_cast<double>(x) + ox, spacing);
          const bool line = dy < thickness || dx < thickness;
          paint(img, y, x, pal, line ? 0.0 : 1.0);
        }
      break;
    }
  }
  return img;
}

Color mean_color(const Tensor& img) {
  Color m{0, 0, 0};
  const std::size_t hw = img.dim(1) * img.dim(2);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < hw; ++i) m[c] += img[c * hw + i];
    m[c] /= static_cast<double>(hw);
  }
  return m;
}

double l1(const Color& a, const Color& b) {
  return std::fabs(a[0] - b[0]) + std::fabs(a[1] - b[1]) + std::fabs(a[2] - b[2]);
}

// Minimum area for a real-defect stand-in.
constexpr double kMinDefectFraction = 0.01;

Tensor stain_mask(Rng& rng, std::size_t h, std::size_t w) {
  const double size = static_cast<double>(std::min(h, w));
  const double cy = rng.uniform(0.15, 0.85) * static_cast<double>(h);
  const double cx = rng.uniform(0.15, 0.85) * static_cast<double>(w);
  const double ry = rng.uniform(0.06, 0.16) * size;
  const double rx = rng.uniform(0.06, 0.16) * size;
  const double th = rng.uniform(0.0, std::numbers::pi);
  const double c = std::cos(th), s = std::sin(th);
  Tensor mask(Shape{1, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      const double u = (dx * c + dy * s) / rx, v = (-dx * s + dy * c) / ry;
      mask.at(0, y, x) = (u * u + v * v <= 1.0) ? 1.0 : 0.0;
    }
  return mask;
}

Tensor scratch_mask(Rng& rng, std::size_t h, std::size_t w) {
  const double size = static_cast<double>(std::min(h, w));
  const double y0 = rng.uniform(0.15, 0.85) * static_cast<double>(h);
  const double x0 = rng.uniform(0.15, 0.85) * static_cast<double>(w);
  const double len = rng.uniform(0.3, 0.6) * size;
  const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double y1 = y0 + len * std::sin(th), x1 = x0 + len * std::cos(th);
  const double half = rng.uniform(1.0, 1.6) * size / 64.0;
  Tensor mask(Shape{1, h, w});
  const double vy = y1 - y0, vx = x1 - x0, vv = vy * vy + vx * vx;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double py = static_cast<double>(y) - y0, px = static_cast<double>(x) - x0;
      const double t = std::clamp((py * vy + px * vx) / vv, 0.0, 1.0);
      const double dy = py - t * vy, dx = px - t * vx;
      mask.at(0, y, x) = (dy * dy + dx * dx <= half * half) ? 1.0 : 0.0;
    }
  return mask;
}

Tensor blend_color(const Tensor& img, const Tensor& mask, const Color& color, double opacity) {
  Tensor out = img;
  const std::size_t h = img.dim(1), w = img.dim(2);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      if (mask.at(0, y, x) == 0.0) continue;
      for (std::size_t c = 0; c < 3; ++c) {
        out.at(c, y, x) = (1.0 - opacity) * img.at(c, y, x) + opacity * color[c];
      }
    }
  return out;
}

Tensor transposed(const Tensor& img) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  Tensor out(Shape{3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, x % h, y % w);
  return out;
}

}  // namespace

std::string_view family_name(TextureFamily family) {
  switch (family) {
    case TextureFamily::kStripes: return "stripes";
    case TextureFamily::kBlobs: return "blobs";
    case TextureFamily::kGrid: return "grid";
  }
  return "unknown";
}

TextureFamily parse_family(std::string_view name) {
  if (name == "stripes") return TextureFamily::kStripes;
  if (name == "blobs") return TextureFamily::kBlobs;
  if (name == "grid") return TextureFamily::kGrid;
  throw ConfigError("unknown texture family '" + std::string(name) + "'");
}

Tensor generate_normal_texture(TextureFamily family, std::uint64_t seed, std::size_t h, std::size_t w) {
  Rng rng(mix_seed(seed));
  const Palette pal = default_palette(family, rng);
  return render(family, pal, rng, h, w);
}

Tensor anomaly_source_texture(TextureFamily nominal, std::uint64_t seed, std::size_t h, std::size_t w) {
  Rng rng(mix_seed(seed));
  TextureFamily family = nominal;
  while (family == nominal) family = static_cast<TextureFamily>(rng.index(3));
  Palette pal{random_color(rng), random_color(rng)};
  return render(family, pal, rng, h, w);
}

Tensor composite_pseudo_anomaly(const Tensor& normal, const Tensor& source, const Tensor& mask, double beta) {
  if (normal.shape() != source.shape() || normal.rank() != 3) {
    throw ShapeError("composite: normal " + diff::shape_str(normal.shape()) + " vs source " +
                     diff::shape_str(source.shape()));
  }
  if (mask.rank() != 3 || mask.dim(0) != 1 || mask.dim(1) != normal.dim(1) || mask.dim(2) != normal.dim(2)) {
    throw ShapeError("composite: mask " + diff::shape_str(mask.shape()) + " not aligned with image " +
                     diff::shape_str(normal.shape()));
  }
  if (!(beta >= 0.1 && beta <= 1.0)) {
    throw DomainError("composite: opacity " + std::to_string(beta) + " outside [0.1, 1]");
  }
  Tensor out(normal.shape());
  const std::size_t hw = mask.size();
  for (std::size_t c = 0; c < normal.dim(0); ++c) {
    for (std::size_t i = 0; i < hw; ++i) {
      const double m = mask[i];
      const double n = normal[c * hw + i];
      const double s = source[c * hw + i];
      out[c * hw + i] = (1.0 - m) * n + beta * (m * s) + (1.0 - beta) * (m * n);
    }
  }
  return out;
}

double mask_fraction(const Tensor& mask) {
  double on = 0.0;
  for (double v : mask.data()) on += v > 0.5 ? 1.0 : 0.0;
  return on / static_cast<double>(mask.size());
}

Tensor perlin_anomaly_mask(std::uint64_t seed, std::size_t h, std::size_t w) {
  const std::size_t size = std::min(h, w);
  for (std::uint64_t attempt = 0; attempt < 10000; ++attempt) {
    Rng rng(derive_seed(seed, 0x6d61736b, attempt));
    const std::size_t divisors[] = {8, 4, 2};
    const std::size_t cell = cell_at_least_2(size / divisors[rng.index(3)]);
    const Tensor field = perlin_field(rng.next(), h, w, cell);
    const double top = *std::max_element(field.data().begin(), field.data().end());
    if (top <= 0.0) continue;
    const double threshold = rng.uniform(0.3, 0.7) * top;
    Tensor mask(Shape{1, h, w});
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = field[i] > threshold ? 1.0 : 0.0;
    const double frac = mask_fraction(mask);
    if (frac >= 0.01 && frac <= 0.40) return mask;
  }
  throw DomainError("perlin_anomaly_mask: no admissible mask after 10000 draws");
}

Defect apply_defect(const Tensor& normal, TextureFamily family, std::uint64_t seed) {
  const std::size_t h = normal.dim(1), w = normal.dim(2);
  for (std::uint64_t attempt = 0; attempt < 1000; ++attempt) {
    Rng rng(derive_seed(seed, 0x646566, attempt));
    const auto kind = static_cast<DefectKind>(rng.index(3));
    Defect d{Tensor(), Tensor(), kind};
    switch (kind) {
      case DefectKind::kStain: {
        d.mask = stain_mask(rng, h, w);
        const Color base = mean_color(normal);
        Color color = random_color(rng);
        while (l1(color, base) < 0.6) color = random_color(rng);
        d.image = blend_color(normal, d.mask, color, rng.uniform(0.7, 1.0));
        break;
      }
      case DefectKind::kScratch: {
        d.mask = scratch_mask(rng, h, w);
        const bool dark = rng.uniform() < 0.5;
        const double v = dark ? rng.uniform(0.0, 0.08) : rng.uniform(0.92, 1.0);
        d.image = blend_color(normal, d.mask, {v, v * 0.95, v * 0.9}, 0.9);
        break;
      }
      case DefectKind::kStructural: {
        d.mask = perlin_anomaly_mask(rng.next(), h, w);
        if (mask_fraction(d.mask) > 0.2) continue;
        const Tensor swapped = transposed(generate_normal_texture(family, rng.next(), h, w));
        d.image = composite_pseudo_anomaly(normal, swapped, d.mask, 1.0);
        break;
      }
    }
    if (mask_fraction(d.mask) >= kMinDefectFraction) return d;
  }
  throw DomainError("apply_defect: no admissible defect after 1000 draws");
}

Tensor add_gaussian_noise(const Tensor& image, double stddev, std::uint64_t seed) {
  Rng rng(mix_seed(seed));
  Tensor out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) {
    out[i] = std::clamp(image[i] + stddev * rng.normal(), 0.0, 1.0);
  }
  return out;
}

}  // namespace devialab::synth
