#pragma once

#include <cmath>

#include "hstn/grid.hpp"

namespace hstn::data {

// Mean endpoint distance between two fields over the central crop.
template <typename T>
T epe_flow(const MotionField<T>& a, const MotionField<T>& b, int crop_margin) {
  require_same_extent(a, b, "epe_flow");
  const Crop c = Crop::centered(a.width(), a.height(), crop_margin);
  double sum = 0;
  for (int y = c.y0; y < c.y1; ++y)
    for (int x = c.x0; x < c.x1; ++x) {
      const double du = static_cast<double>(a.u(x, y)) - b.u(x, y);
      const double dv = static_cast<double>(a.v(x, y)) - b.v(x, y);
      sum += std::sqrt(du * du + dv * dv);
    }
  return static_cast<T>(sum / static_cast<double>(c.count()));
}

// Mean absolute intensity difference over the central crop.
template <typename T>
T epe_image(const Image<T>& a, const Image<T>& b, int crop_margin) {
  require_same_extent(a, b, "epe_image");
  const Crop c = Crop::centered(a.width(), a.height(), crop_margin);
  double sum = 0;
  for (int y = c.y0; y < c.y1; ++y)
    for (int x = c.x0; x < c.x1; ++x) sum += std::abs(static_cast<double>(a.at(x, y)) - b.at(x, y));
  return static_cast<T>(sum / static_cast<double>(c.count()));
}

}  // namespace hstn::data
