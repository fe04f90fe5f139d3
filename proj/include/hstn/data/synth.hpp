#pragma once

// Seed-driven generators: stroke-rendered handwriting-like digits, cluttered
// canvases, smooth random textures and warp pairs with ground-truth fields.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "hstn/affine.hpp"
#include "hstn/data/idx.hpp"
#include "hstn/grid.hpp"
#include "hstn/rng.hpp"

namespace hstn::data {

namespace detail {

struct Pt {
  double x, y;
};
using Stroke = std::vector<Pt>;

inline Stroke ellipse(double cx, double cy, double rx, double ry, double t0 = 0, double t1 = 2 * std::numbers::pi,
                      int n = 14) {
  Stroke s;
  for (int i = 0; i <= n; ++i) {
    const double t = t0 + (t1 - t0) * i / n;
    s.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  return s;
}

// Digit skeletons in the unit square (x right, y down).
inline std::vector<Stroke> digit_strokes(int label) {
  constexpr double pi = std::numbers::pi;
  switch (label) {
    case 0: return {ellipse(0.5, 0.5, 0.27, 0.4)};
    case 1: return {{{0.36, 0.24}, {0.52, 0.1}, {0.52, 0.9}}};
    case 2: return {{{0.26, 0.3}, {0.34, 0.15}, {0.52, 0.09}, {0.7, 0.17}, {0.72, 0.36}, {0.26, 0.9}, {0.78, 0.9}}};
    case 3: return {{{0.26, 0.16}, {0.5, 0.09}, {0.7, 0.2}, {0.66, 0.38}, {0.45, 0.47}, {0.68, 0.58}, {0.72, 0.78},
                     {0.52, 0.92}, {0.26, 0.84}}};
    case 4: return {{{0.64, 0.9}, {0.64, 0.1}, {0.2, 0.64}, {0.8, 0.64}}};
    case 5: return {{{0.74, 0.1}, {0.32, 0.1}, {0.28, 0.46}, {0.52, 0.4}, {0.72, 0.55}, {0.72, 0.78}, {0.5, 0.92},
                     {0.26, 0.84}}};
    case 6: return {{{0.68, 0.12}, {0.46, 0.2}, {0.32, 0.42}}, ellipse(0.5, 0.68, 0.22, 0.22, pi, 3 * pi)};
    case 7: return {{{0.22, 0.1}, {0.78, 0.1}, {0.44, 0.9}}};
    case 8: return {ellipse(0.5, 0.29, 0.19, 0.19), ellipse(0.5, 0.7, 0.23, 0.21)};
    case 9: return {ellipse(0.5, 0.32, 0.2, 0.21), {{0.7, 0.32}, {0.66, 0.9}}};
  }
  throw InvalidInput("digit label must be in 0..9");
}

inline double segment_distance(Pt p, Pt a, Pt b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

// Separable Gaussian blur with clamped borders.
inline std::vector<double> gaussian_blur(const std::vector<double>& in, int w, int h, double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> k(2 * r + 1);
  double ks = 0;
  for (int i = -r; i <= r; ++i) ks += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= ks;
  std::vector<double> tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * in[y * w + std::clamp(x + i, 0, w - 1)];
      tmp[y * w + x] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
      out[y * w + x] = s;
    }
  return out;
}

}  // namespace detail

// Geometric variability of rendered digits.
struct DigitStyle {
  double max_rotation_deg = 17;
  double min_scale = 0.75, max_scale = 1.0;

  void validate() const {
    require(max_rotation_deg >= 0 && max_rotation_deg <= 180, "digit style: rotation must lie in [0, 180]");
    require(min_scale > 0 && min_scale <= max_scale && max_scale <= 1.25, "digit style: invalid scale range");
  }
};

// Renders one digit with random stroke jitter, thickness, slant, rotation and
// scale. Intensities in [0, 1] on a zero background.
inline Image<float> render_digit(int label, std::uint64_t seed, int size = 28, const DigitStyle& style = {}) {
  require(size >= 8, "render_digit: size must be at least 8");
  style.validate();
  SplitMix64 rng(seed);
  auto strokes = detail::digit_strokes(label);
  const double rot = style.max_rotation_deg * std::numbers::pi / 180.0;
  const double theta = rng.uniform(-rot, rot), shear = rng.uniform(-0.3, 0.2);
  const double scale = rng.uniform(style.min_scale, style.max_scale);
  const double sx = scale * rng.uniform(0.85, 1.0), sy = scale;
  const double thick = rng.uniform(0.045, 0.085) * size;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double dx = rng.uniform(-0.05, 0.05), dy = rng.uniform(-0.05, 0.05);
  for (auto& s : strokes)
    for (auto& p : s) {
      const double jx = p.x - 0.5 + 0.025 * rng.normal(), jy = p.y - 0.5 + 0.025 * rng.normal();
      const double qx = sx * (jx + shear * jy), qy = sy * jy;
      p = {(0.5 + dx + 0.8 * (ct * qx - st * qy)) * size, (0.5 + dy + 0.8 * (st * qx + ct * qy)) * size};
    }
  Image<float> img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const detail::Pt p{x + 0.5, y + 0.5};
      double d = 1e9;
      for (const auto& s : strokes)
        for (std::size_t i = 0; i + 1 < s.size(); ++i) d = std::min(d, detail::segment_distance(p, s[i], s[i + 1]));
      img.at(x, y) = static_cast<float>(std::clamp(thick + 0.5 - d, 0.0, 1.0));
    }
  return img;
}

// Balanced digit set: sample i has label i % 10.
inline std::vector<LabeledImage> make_digits(std::size_t n, std::uint64_t seed, int size = 28,
                                             const DigitStyle& style = {}) {
  SplitMix64 rng(seed);
  std::vector<LabeledImage> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 10);
    out.push_back({render_digit(label, rng.next(), size, style), label});
  }
  return out;
}

// Places `digit` at a uniform random offset on a zero canvas and pastes
// `n_distractors` random 8x8 crops taken from other members of `pool`
// (pixel-wise max).
inline LabeledImage make_cluttered(const LabeledImage& digit, int canvas_w, int canvas_h, int n_distractors,
                                   std::uint64_t seed, const std::vector<LabeledImage>& pool) {
  const Image<float>& d = digit.image;
  require(canvas_w >= d.width() && canvas_h >= d.height(), "make_cluttered: canvas smaller than digit");
  require(n_distractors >= 0, "make_cluttered: negative distractor count");
  require(n_distractors == 0 || !pool.empty(), "make_cluttered: distractors need a non-empty pool");
  SplitMix64 rng(seed);
  Image<float> canvas(canvas_w, canvas_h);
  constexpr int patch = 8;
  for (int k = 0; k < n_distractors; ++k) {
    std::size_t pick = rng.below(pool.size());
    if (&pool[pick] == &digit && pool.size() > 1) pick = (pick + 1) % pool.size();
    const Image<float>& other = pool[pick].image;
    if (other.width() < patch || other.height() < patch || canvas_w < patch || canvas_h < patch) continue;
    const int sx = static_cast<int>(rng.below(other.width() - patch + 1));
    const int sy = static_cast<int>(rng.below(other.height() - patch + 1));
    const int ox = static_cast<int>(rng.below(canvas_w - patch + 1));
    const int oy = static_cast<int>(rng.below(canvas_h - patch + 1));
    for (int y = 0; y < patch; ++y)
      for (int x = 0; x < patch; ++x)
        canvas.at(ox + x, oy + y) = std::max(canvas.at(ox + x, oy + y), other.at(sx + x, sy + y));
  }
  const int ox = static_cast<int>(rng.below(canvas_w - d.width() + 1));
  const int oy = static_cast<int>(rng.below(canvas_h - d.height() + 1));
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < d.width(); ++x) canvas.at(ox + x, oy + y) = std::max(canvas.at(ox + x, oy + y), d.at(x, y));
  return {std::move(canvas), digit.label};
}

// Smooth random texture: a sum of Gaussian blobs normalized to [0.1, 0.9].
inline Image<float> make_texture(int width, int height, std::uint64_t seed, int blobs = 24) {
  require(width >= 1 && height >= 1, "make_texture: extents must be positive");
  SplitMix64 rng(seed);
  std::vector<double> acc(static_cast<std::size_t>(width) * height, 0.0);
  const double scale = std::min(width, height);
  for (int b = 0; b < blobs; ++b) {
    const double cx = rng.uniform(0, width), cy = rng.uniform(0, height);
    const double s = rng.uniform(0.06, 0.16) * scale, amp = rng.uniform(-1, 1);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        acc[y * width + x] += amp * std::exp(-0.5 * r2 / (s * s));
      }
  }
  const auto [lo, hi] = std::minmax_element(acc.begin(), acc.end());
  const double span = std::max(*hi - *lo, 1e-12);
  std::vector<float> px(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) px[i] = static_cast<float>(0.1 + 0.8 * (acc[i] - *lo) / span);
  return Image<float>(width, height, std::move(px));
}

// Uniform sampling ranges for random affine maps, in normalized coordinates.
struct AffineRanges {
  double scale_lo = 0.85, scale_hi = 1.15;
  double rotation_deg = 15;  // symmetric
  double translation = 0.2;  // fraction of half-extent, symmetric
  double shear = 0.1;        // symmetric

  static AffineRanges none() { return {1, 1, 0, 0, 0}; }

  void validate() const {
    require(scale_lo > 0 && scale_lo <= scale_hi, "affine ranges: need 0 < scale_lo <= scale_hi");
    require(rotation_deg >= 0 && translation >= 0 && shear >= 0, "affine ranges: spans must be non-negative");
  }
};

template <typename T>
AffineParams<T> sample_affine(const AffineRanges& r, SplitMix64& rng) {
  r.validate();
  const double s = rng.uniform(r.scale_lo, r.scale_hi);
  const double th = rng.uniform(-r.rotation_deg, r.rotation_deg) * std::numbers::pi / 180.0;
  const double sh = rng.uniform(-r.shear, r.shear);
  const double tx = rng.uniform(-r.translation, r.translation), ty = rng.uniform(-r.translation, r.translation);
  // s * R(th) * [[1, sh], [0, 1]]
  const double c = std::cos(th), n = std::sin(th);
  return {static_cast<T>(s * c), static_cast<T>(s * (c * sh - n)), static_cast<T>(tx),
          static_cast<T>(s * n), static_cast<T>(s * (n * sh + c)), static_cast<T>(ty)};
}

// Gaussian-smoothed white-noise displacements rescaled so that the largest
// absolute component equals `amplitude`.
template <typename T>
MotionField<T> make_elastic_field(int width, int height, double sigma, double amplitude, SplitMix64& rng) {
  require(sigma > 0, "elastic field: sigma must be positive");
  require(amplitude >= 0, "elastic field: amplitude must be non-negative");
  MotionField<T> f(width, height);
  if (amplitude == 0) return f;
  const std::size_t n = f.pixel_count();
  std::vector<double> u(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = rng.normal();
    v[i] = rng.normal();
  }
  u = detail::gaussian_blur(u, width, height, sigma);
  v = detail::gaussian_blur(v, width, height, sigma);
  double m = 0;
  for (std::size_t i = 0; i < n; ++i) m = std::max({m, std::abs(u[i]), std::abs(v[i])});
  if (m == 0) return f;
  const double k = amplitude / m;
  for (std::size_t i = 0; i < n; ++i) {
    f.vectors()[2 * i] = static_cast<T>(u[i] * k);
    f.vectors()[2 * i + 1] = static_cast<T>(v[i] * k);
  }
  return f;
}

template <typename T>
struct WarpPair {
  Image<T> src;
  Image<T> tgt;
  MotionField<T> gt_field;
  std::uint64_t seed = 0;
  AffineParams<T> affine;
  double elastic_sigma = 0, elastic_amplitude = 0;

  std::string meta() const {
    std::ostringstream os;
    os << "seed=" << seed << " affine=" << format_affine(affine) << " elastic_sigma=" << elastic_sigma
       << " elastic_amplitude=" << elastic_amplitude;
    return os.str();
  }
};

// src is the base image; tgt = sample_bilinear(base, gt_field), so warping src
// by gt_field reproduces tgt exactly and aligning src onto tgt recovers gt_field.
template <typename T>
WarpPair<T> make_warp_pair(const Image<T>& base, const AffineRanges& ranges, double elastic_sigma,
                           double elastic_amplitude, std::uint64_t seed) {
  SplitMix64 rng(seed);
  WarpPair<T> p;
  p.seed = seed;
  p.elastic_sigma = elastic_sigma;
  p.elastic_amplitude = elastic_amplitude;
  p.affine = sample_affine<T>(ranges, rng);
  const auto elastic = make_elastic_field<T>(base.width(), base.height(), elastic_sigma, elastic_amplitude, rng);
  p.gt_field = compose_fields(to_motion_field(p.affine, base.width(), base.height()), elastic);
  p.src = base;
  p.tgt = sample_bilinear(base, p.gt_field);
  return p;
}

}  // namespace hstn::data
