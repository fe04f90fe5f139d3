#pragma once

#include <array>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>

#include "hstn/image.hpp"

namespace hstn {

// Affine map on normalized coordinates in [-1, 1]:
//   x' = a x + b y + c,   y' = d x + e y + f.
// The motion is (x' - x, y' - y), so the identity is (1, 0, 0, 0, 1, 0).
template <typename T>
struct AffineParams {
  T a = 1, b = 0, c = 0, d = 0, e = 1, f = 0;

  static AffineParams identity() { return {}; }

  static AffineParams from_array(const std::array<T, 6>& p) {
    return {p[0], p[1], p[2], p[3], p[4], p[5]};
  }
  std::array<T, 6> to_array() const { return {a, b, c, d, e, f}; }

  bool finite() const {
    for (T v : to_array())
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const AffineParams&, const AffineParams&) = default;
};

// Row order a b c d e f, space separated.
template <typename T>
std::string format_affine(const AffineParams<T>& p) {
  std::ostringstream os;
  os << std::setprecision(9);
  const auto arr = p.to_array();
  for (std::size_t i = 0; i < arr.size(); ++i) os << (i ? " " : "") << arr[i];
  return os.str();
}

namespace detail {

// Normalized coordinate of pixel index i on an axis of n pixels; 0 for n == 1.
template <typename T>
T normalized_coord(int i, int n) {
  if (n == 1) return T(0);
  return T(2) * static_cast<T>(i) / static_cast<T>(n - 1) - T(1);
}

template <typename T>
T pixel_scale(int n) {
  return static_cast<T>(n - 1) / T(2);
}

}  // namespace detail

template <typename T>
MotionField<T> to_motion_field(const AffineParams<T>& p, int width, int height) {
  require(width >= 1 && height >= 1, "to_motion_field: extents must be positive");
  require(p.finite(), "to_motion_field: non-finite affine parameter");
  MotionField<T> out(width, height);
  const T sx = detail::pixel_scale<T>(width), sy = detail::pixel_scale<T>(height);
  for (int j = 0; j < height; ++j) {
    const T y = detail::normalized_coord<T>(j, height);
    for (int i = 0; i < width; ++i) {
      const T x = detail::normalized_coord<T>(i, width);
      out.u(i, j) = ((p.a - T(1)) * x + p.b * y + p.c) * sx;
      out.v(i, j) = (p.d * x + (p.e - T(1)) * y + p.f) * sy;
    }
  }
  return out;
}

// Gradient of <upstream, to_motion_field(p)> with respect to (a..f).
template <typename T>
std::array<T, 6> to_motion_field_grad(const AffineParams<T>& /*p*/, int width, int height,
                                      const MotionField<T>& upstream) {
  require(width == upstream.width() && height == upstream.height(),
          "to_motion_field_grad: upstream extent mismatch");
  const T sx = detail::pixel_scale<T>(width), sy = detail::pixel_scale<T>(height);
  std::array<T, 6> g{};
  for (int j = 0; j < height; ++j) {
    const T y = detail::normalized_coord<T>(j, height);
    for (int i = 0; i < width; ++i) {
      const T x = detail::normalized_coord<T>(i, width);
      const T gu = upstream.u(i, j) * sx, gv = upstream.v(i, j) * sy;
      g[0] += gu * x;
      g[1] += gu * y;
      g[2] += gu;
      g[3] += gv * x;
      g[4] += gv * y;
      g[5] += gv;
    }
  }
  return g;
}

}  // namespace hstn
