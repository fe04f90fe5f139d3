#pragma once

// Differentiable bilinear sampler with backward mapping, field composition and
// the cropped photometric loss.

#include <algorithm>
#include <cmath>
#include <utility>

#include "hstn/image.hpp"

namespace hstn {

namespace detail {

// Bilinear tap along one axis. Read coordinates are clamped to [0, n-1]; the
// derivative with respect to the unclamped coordinate is zero outside
// [0, n-1). At integer coordinates the cell toward +infinity is used.
template <typename T>
struct AxisTap {
  int i0, i1;
  T frac;
  bool active;

  AxisTap(T pos, int n) {
    const T hi = static_cast<T>(n - 1);
    const T c = std::clamp(pos, T(0), hi);
    i0 = static_cast<int>(std::floor(c));
    if (i0 > n - 1) i0 = n - 1;
    i1 = std::min(i0 + 1, n - 1);
    frac = c - static_cast<T>(i0);
    active = pos >= T(0) && pos < hi;
  }
};

}  // namespace detail

template <typename T>
Image<T> sample_bilinear(const Image<T>& src, const MotionField<T>& field) {
  require_same_extent(src, field, "sample_bilinear");
  const int w = src.width(), h = src.height();
  Image<T> out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const detail::AxisTap<T> tx(static_cast<T>(x) + field.u(x, y), w);
      const detail::AxisTap<T> ty(static_cast<T>(y) + field.v(x, y), h);
      const T top = (T(1) - tx.frac) * src.at(tx.i0, ty.i0) + tx.frac * src.at(tx.i1, ty.i0);
      const T bot = (T(1) - tx.frac) * src.at(tx.i0, ty.i1) + tx.frac * src.at(tx.i1, ty.i1);
      out.at(x, y) = (T(1) - ty.frac) * top + ty.frac * bot;
    }
  }
  return out;
}

template <typename T>
struct SamplerGrad {
  Image<T> src;
  MotionField<T> field;
};

// Contracts the Jacobian of sample_bilinear with `upstream`.
template <typename T>
SamplerGrad<T> sample_bilinear_grad(const Image<T>& src, const MotionField<T>& field,
                                    const Image<T>& upstream) {
  require_same_extent(src, field, "sample_bilinear_grad");
  require_same_extent(src, upstream, "sample_bilinear_grad");
  const int w = src.width(), h = src.height();
  SamplerGrad<T> g{Image<T>(w, h), MotionField<T>(w, h)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const T up = upstream.at(x, y);
      if (up == T(0)) continue;
      const detail::AxisTap<T> tx(static_cast<T>(x) + field.u(x, y), w);
      const detail::AxisTap<T> ty(static_cast<T>(y) + field.v(x, y), h);
      const T i00 = src.at(tx.i0, ty.i0), i10 = src.at(tx.i1, ty.i0);
      const T i01 = src.at(tx.i0, ty.i1), i11 = src.at(tx.i1, ty.i1);

      const T wx0 = T(1) - tx.frac, wy0 = T(1) - ty.frac;
      g.src.at(tx.i0, ty.i0) += up * wx0 * wy0;
      g.src.at(tx.i1, ty.i0) += up * tx.frac * wy0;
      g.src.at(tx.i0, ty.i1) += up * wx0 * ty.frac;
      g.src.at(tx.i1, ty.i1) += up * tx.frac * ty.frac;

      if (tx.active) g.field.u(x, y) = up * (wy0 * (i10 - i00) + ty.frac * (i11 - i01));
      if (ty.active) g.field.v(x, y) = up * (wx0 * (i01 - i00) + tx.frac * (i11 - i10));
    }
  }
  return g;
}

template <typename T>
MotionField<T> compose_fields(const MotionField<T>& linear_part, const MotionField<T>& flow) {
  require_same_extent(linear_part, flow, "compose_fields");
  MotionField<T> out(linear_part.width(), linear_part.height());
  auto& o = out.vectors();
  const auto& a = linear_part.vectors();
  const auto& b = flow.vectors();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + b[i];
  return out;
}

// Centered crop [margin, extent - margin) on both axes.
struct Crop {
  int x0, y0, x1, y1;

  static Crop centered(int width, int height, int margin) {
    require(margin >= 0, "crop margin must be non-negative");
    require(2 * margin < std::min(width, height), "crop margin leaves no pixels");
    return {margin, margin, width - margin, height - margin};
  }

  int count() const { return (x1 - x0) * (y1 - y0); }
};

template <typename T>
struct LossGrad {
  T loss;
  Image<T> grad;
};

// Mean squared intensity difference over the centered crop.
template <typename T>
LossGrad<T> photometric_loss(const Image<T>& warped, const Image<T>& target, int crop_margin) {
  require_same_extent(warped, target, "photometric_loss");
  const Crop crop = Crop::centered(warped.width(), warped.height(), crop_margin);
  const T inv_n = T(1) / static_cast<T>(crop.count());
  LossGrad<T> r{T(0), Image<T>(warped.width(), warped.height())};
  for (int y = crop.y0; y < crop.y1; ++y) {
    for (int x = crop.x0; x < crop.x1; ++x) {
      const T d = warped.at(x, y) - target.at(x, y);
      r.loss += d * d;
      r.grad.at(x, y) = T(2) * d * inv_n;
    }
  }
  r.loss *= inv_n;
  return r;
}

}  // namespace hstn
