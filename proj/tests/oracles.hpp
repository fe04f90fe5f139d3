#pragma once

// Independent reference computations used only by the test suites.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "hstn/image.hpp"

namespace oracle {

// Central finite difference of a scalar function of a flat parameter vector.
inline std::vector<double> central_diff(std::vector<double> x,
                                        const std::function<double(const std::vector<double>&)>& f,
                                        double h = 1e-4) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f(x);
    x[i] = keep - h;
    const double fm = f(x);
    x[i] = keep;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Edge-clamped integer-shift read: out(x, y) = src(clamp(x + dx), clamp(y + dy)).
template <typename T>
hstn::Image<T> shift_clamped(const hstn::Image<T>& src, int dx, int dy) {
  hstn::Image<T> out(src.width(), src.height());
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x)
      out.at(x, y) = src.at(std::clamp(x + dx, 0, src.width() - 1),
                            std::clamp(y + dy, 0, src.height() - 1));
  return out;
}

inline hstn::ImageD random_image(int w, int h, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  hstn::ImageD img(w, h);
  for (auto& p : img.pixels()) p = u(rng);
  return img;
}

inline hstn::FieldD random_field(int w, int h, double lo, double hi, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  hstn::FieldD f(w, h);
  for (auto& c : f.vectors()) c = u(rng);
  return f;
}

// Naive endpoint error over a centered crop.
inline double epe_naive(const hstn::FieldD& a, const hstn::FieldD& b, int margin) {
  double sum = 0;
  int n = 0;
  for (int y = margin; y < a.height() - margin; ++y)
    for (int x = margin; x < a.width() - margin; ++x) {
      const double du = a.u(x, y) - b.u(x, y), dv = a.v(x, y) - b.v(x, y);
      sum += std::sqrt(du * du + dv * dv);
      ++n;
    }
  return sum / n;
}

}  // namespace oracle
