#pragma once

// Network-free two-stage alignment: descent on the six affine parameters,
// then, with the affine map fixed, descent on a per-pixel residual flow.
// The affine stage runs once per entry of affine_blur, on both images
// smoothed with a Gaussian of that width (0 = unsmoothed), coarse first.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <type_traits>
#include <vector>

#include "hstn/affine.hpp"
#include "hstn/grid.hpp"
#include "hstn/model.hpp"
#include "hstn/regularize.hpp"

namespace hstn {

struct DirectConfig {
  bool affine_stage = true;
  int affine_steps = 300;
  double affine_lr = 0.02;
  std::vector<double> affine_blur{4.0, 0.0};  // affine_steps run per entry
  bool flow_stage = true;
  int flow_steps = 1000;
  double flow_lr = 0.2;
  RegWeights reg{0.001, 0.0001};
  int crop_margin = 4;
  // Learning rates decay geometrically to lr * final_lr_fraction.
  double final_lr_fraction = 0.01;

  void validate() const {
    require(affine_steps >= 0 && flow_steps >= 0, "direct: step counts must be non-negative");
    require(affine_lr > 0 && flow_lr > 0, "direct: learning rates must be positive");
    require(final_lr_fraction > 0 && final_lr_fraction <= 1, "direct: final_lr_fraction must lie in (0, 1]");
    require(crop_margin >= 0, "direct: crop margin must be non-negative");
    require(!affine_blur.empty(), "direct: affine_blur needs at least one entry");
    for (double s : affine_blur) require(s >= 0 && std::isfinite(s), "direct: blur widths must be non-negative");
    reg.validate();
  }
};

namespace detail {

// Adam over a flat vector of doubles.
struct FlatAdam {
  std::vector<double> m, v;
  long t = 0;
  explicit FlatAdam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  template <typename Vec, typename Grad>
  void step(Vec& x, const Grad& g, double lr) {
    ++t;
    const double bc1 = 1 - std::pow(0.9, static_cast<double>(t)), bc2 = 1 - std::pow(0.999, static_cast<double>(t));
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      m[i] = 0.9 * m[i] + 0.1 * gi;
      v[i] = 0.999 * v[i] + 0.001 * gi * gi;
      x[i] = static_cast<std::remove_reference_t<decltype(x[i])>>(
          static_cast<double>(x[i]) - lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + 1e-8));
    }
  }
};

inline double decayed(double lr, double fraction, int step, int steps) {
  return steps <= 1 ? lr : lr * std::pow(fraction, static_cast<double>(step) / (steps - 1));
}

// Separable Gaussian with edge clamping; sigma 0 returns the input.
template <typename T>
Image<T> gaussian_blur(const Image<T>& img, double sigma) {
  if (sigma == 0) return img;
  const int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  const int w = img.width(), h = img.height();
  std::vector<double> tmp(img.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * img.at(std::clamp(x + i, 0, w - 1), y);
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  Image<T> out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
      out.at(x, y) = static_cast<T>(acc);
    }
  return out;
}

inline void check_finite(double loss, const std::string& stage, int step) {
  if (!std::isfinite(loss))
    throw Divergence("direct_align: non-finite loss in " + stage + " at step " + std::to_string(step));
}

}  // namespace detail

template <typename T>
AlignResult<T> direct_align(const Image<T>& src, const Image<T>& tgt, const DirectConfig& cfg) {
  cfg.validate();
  require_same_extent(src, tgt, "direct_align");
  const int W = src.width(), H = src.height();
  Crop::centered(W, H, cfg.crop_margin);

  AffineParams<T> affine = AffineParams<T>::identity();
  if (cfg.affine_stage) {
    std::array<T, 6> x = affine.to_array();
    for (double sigma : cfg.affine_blur) {
      const Image<T> s_src = detail::gaussian_blur(src, sigma), s_tgt = detail::gaussian_blur(tgt, sigma);
      detail::FlatAdam opt(6);
      for (int s = 0; s < cfg.affine_steps; ++s) {
        const auto p = AffineParams<T>::from_array(x);
        const auto field = to_motion_field(p, W, H);
        const auto warped = sample_bilinear(s_src, field);
        const auto lg = photometric_loss(warped, s_tgt, cfg.crop_margin);
        detail::check_finite(lg.loss, "affine stage", s);
        const auto g_field = sample_bilinear_grad(s_src, field, lg.grad).field;
        const auto g = to_motion_field_grad(p, W, H, g_field);
        for (T gi : g) detail::check_finite(gi, "affine stage", s);
        opt.step(x, g, detail::decayed(cfg.affine_lr, cfg.final_lr_fraction, s, cfg.affine_steps));
      }
    }
    affine = AffineParams<T>::from_array(x);
  }
  const MotionField<T> linear = to_motion_field(affine, W, H);

  MotionField<T> flow(W, H);
  if (cfg.flow_stage && W >= 3 && H >= 3) {
    auto& w = flow.vectors();
    detail::FlatAdam opt(w.size());
    std::vector<T> g(w.size());
    for (int s = 0; s < cfg.flow_steps; ++s) {
      const auto composed = compose_fields(linear, flow);
      const auto lg = photometric_loss(sample_bilinear(src, composed), tgt, cfg.crop_margin);
      const auto rg = reg_loss_grad(flow, cfg.reg);
      detail::check_finite(lg.loss + rg.loss, "flow stage", s);
      const auto gf = sample_bilinear_grad(src, composed, lg.grad).field;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = gf.vectors()[i] + rg.grad.vectors()[i];
      opt.step(w, g, detail::decayed(cfg.flow_lr, cfg.final_lr_fraction, s, cfg.flow_steps));
    }
  }

  AlignResult<T> r;
  r.affine = affine;
  r.flow = flow;
  r.composed = compose_fields(linear, flow);
  r.warped = sample_bilinear(src, r.composed);
  r.final_loss = photometric_loss(r.warped, tgt, cfg.crop_margin).loss;
  return r;
}

}  // namespace hstn
