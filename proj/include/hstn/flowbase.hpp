#pragma once

// Horn-Schunck optical flow with Jacobi updates and a coarse-to-fine pyramid.
// The discrete energy minimized at one level is
//   E(u, v) = sum_p r_p^2 + lambda * sum_edges (du^2 + dv^2),
//   r_p = Ix (u - u0) + Iy (v - v0) + It,
// with derivatives taken on the source warped by the initial field (u0, v0)
// and It = warped - tgt. Edges are the 4-neighbour grid edges.

#include <algorithm>
#include <cmath>
#include <vector>

#include "hstn/grid.hpp"

namespace hstn {

struct PyramidConfig {
  int levels = 3;
  double scale_factor = 0.5;
  int iterations = 100;  // per level
  double lambda = 0.1;
  int warps_per_level = 1;  // re-linearizations at each level

  void validate() const {
    require(warps_per_level >= 1, "pyramid: warps_per_level must be at least 1");
    require(levels >= 1, "pyramid: levels must be at least 1");
    require(scale_factor > 0 && scale_factor < 1, "pyramid: scale factor must lie in (0, 1)");
    require(iterations >= 0, "pyramid: iterations must be non-negative");
    require(lambda > 0 && std::isfinite(lambda), "pyramid: lambda must be positive");
  }
};

namespace detail {

struct HsTerms {
  int w, h;
  std::vector<double> ix, iy, it;
};

template <typename T>
HsTerms hs_terms(const Image<T>& src, const Image<T>& tgt, const MotionField<T>& init) {
  const Image<T> warped = sample_bilinear(src, init);
  const int w = src.width(), h = src.height();
  HsTerms t{w, h, {}, {}, {}};
  const std::size_t n = src.size();
  t.ix.resize(n);
  t.iy.resize(n);
  t.it.resize(n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      t.ix[i] = 0.5 * (static_cast<double>(warped.at(std::min(x + 1, w - 1), y)) - warped.at(std::max(x - 1, 0), y));
      t.iy[i] = 0.5 * (static_cast<double>(warped.at(x, std::min(y + 1, h - 1))) - warped.at(x, std::max(y - 1, 0)));
      t.it[i] = static_cast<double>(warped[i]) - tgt[i];
    }
  return t;
}

template <typename F>
void for_each_neighbor(int x, int y, int w, int h, F&& f) {
  if (x > 0) f(x - 1, y);
  if (x + 1 < w) f(x + 1, y);
  if (y > 0) f(x, y - 1);
  if (y + 1 < h) f(x, y + 1);
}

inline double hs_energy_terms(const HsTerms& t, const std::vector<double>& du, const std::vector<double>& dv,
                              const std::vector<double>& u, const std::vector<double>& v, double lambda) {
  double data = 0, smooth = 0;
  for (int y = 0; y < t.h; ++y)
    for (int x = 0; x < t.w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * t.w + x;
      const double r = t.ix[i] * du[i] + t.iy[i] * dv[i] + t.it[i];
      data += r * r;
      if (x + 1 < t.w) smooth += (u[i + 1] - u[i]) * (u[i + 1] - u[i]) + (v[i + 1] - v[i]) * (v[i + 1] - v[i]);
      if (y + 1 < t.h) {
        const std::size_t j = i + t.w;
        smooth += (u[j] - u[i]) * (u[j] - u[i]) + (v[j] - v[i]) * (v[j] - v[i]);
      }
    }
  return data + lambda * smooth;
}

}  // namespace detail

// Energy of `flow` under the linearization around `init`.
template <typename T>
double hs_energy(const Image<T>& src, const Image<T>& tgt, const MotionField<T>& init, const MotionField<T>& flow,
                 double lambda) {
  require_same_extent(src, tgt, "hs_energy");
  require_same_extent(src, init, "hs_energy");
  require_same_extent(src, flow, "hs_energy");
  const auto t = detail::hs_terms(src, tgt, init);
  const std::size_t n = src.size();
  std::vector<double> u(n), v(n), du(n), dv(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = flow.vectors()[2 * i];
    v[i] = flow.vectors()[2 * i + 1];
    du[i] = u[i] - init.vectors()[2 * i];
    dv[i] = v[i] - init.vectors()[2 * i + 1];
  }
  return detail::hs_energy_terms(t, du, dv, u, v, lambda);
}

// Jacobi iterations starting from `init`. If `energy_trace` is given, the
// energy before the first and after every iteration is appended.
template <typename T>
MotionField<T> horn_schunck_level(const Image<T>& src, const Image<T>& tgt, const MotionField<T>& init,
                                  double lambda, int iterations, std::vector<double>* energy_trace = nullptr) {
  require_same_extent(src, tgt, "horn_schunck_level");
  require_same_extent(src, init, "horn_schunck_level");
  require(lambda > 0 && std::isfinite(lambda), "horn_schunck_level: lambda must be positive");
  require(iterations >= 0, "horn_schunck_level: iterations must be non-negative");
  const auto t = detail::hs_terms(src, tgt, init);
  const int w = t.w, h = t.h;
  const std::size_t n = src.size();
  std::vector<double> u0(n), v0(n);
  for (std::size_t i = 0; i < n; ++i) {
    u0[i] = init.vectors()[2 * i];
    v0[i] = init.vectors()[2 * i + 1];
  }
  std::vector<double> u = u0, v = v0, nu(n), nv(n), du(n), dv(n);
  auto trace = [&] {
    if (!energy_trace) return;
    for (std::size_t i = 0; i < n; ++i) {
      du[i] = u[i] - u0[i];
      dv[i] = v[i] - v0[i];
    }
    energy_trace->push_back(detail::hs_energy_terms(t, du, dv, u, v, lambda));
  };
  trace();
  for (int it = 0; it < iterations; ++it) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        double su = 0, sv = 0;
        int deg = 0;
        detail::for_each_neighbor(x, y, w, h, [&](int qx, int qy) {
          const std::size_t j = static_cast<std::size_t>(qy) * w + qx;
          su += u[j];
          sv += v[j];
          ++deg;
        });
        if (deg == 0) {
          // 1x1 image: no smoothness term; solve the data term alone.
          const double g2 = t.ix[i] * t.ix[i] + t.iy[i] * t.iy[i];
          const double k = g2 > 0 ? t.it[i] / g2 : 0.0;
          nu[i] = u0[i] - t.ix[i] * k;
          nv[i] = v0[i] - t.iy[i] * k;
          continue;
        }
        const double ub = su / deg, vb = sv / deg;
        const double r = t.ix[i] * (ub - u0[i]) + t.iy[i] * (vb - v0[i]) + t.it[i];
        const double denom = lambda * deg + t.ix[i] * t.ix[i] + t.iy[i] * t.iy[i];
        nu[i] = ub - t.ix[i] * r / denom;
        nv[i] = vb - t.iy[i] * r / denom;
      }
    std::swap(u, nu);
    std::swap(v, nv);
    trace();
  }
  MotionField<T> out(w, h);
  for (std::size_t i = 0; i < n; ++i) {
    out.vectors()[2 * i] = static_cast<T>(u[i]);
    out.vectors()[2 * i + 1] = static_cast<T>(v[i]);
  }
  return out;
}

namespace detail {

inline std::vector<double> binomial_smooth(const std::vector<double>& in, int w, int h) {
  static constexpr double k[5] = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};
  std::vector<double> tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * in[y * w + std::clamp(x + i, 0, w - 1)];
      tmp[y * w + x] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
      out[y * w + x] = s;
    }
  return out;
}

// Bilinear resize with pixel-center alignment and clamped borders.
inline std::vector<double> resize(const std::vector<double>& in, int w, int h, int nw, int nh) {
  std::vector<double> out(static_cast<std::size_t>(nw) * nh);
  const double fx = static_cast<double>(w) / nw, fy = static_cast<double>(h) / nh;
  for (int y = 0; y < nh; ++y) {
    const double sy = std::clamp((y + 0.5) * fy - 0.5, 0.0, h - 1.0);
    const int y0 = std::min(static_cast<int>(sy), h - 1), y1 = std::min(y0 + 1, h - 1);
    const double wy = sy - y0;
    for (int x = 0; x < nw; ++x) {
      const double sx = std::clamp((x + 0.5) * fx - 0.5, 0.0, w - 1.0);
      const int x0 = std::min(static_cast<int>(sx), w - 1), x1 = std::min(x0 + 1, w - 1);
      const double wx = sx - x0;
      out[y * nw + x] = (1 - wy) * ((1 - wx) * in[y0 * w + x0] + wx * in[y0 * w + x1]) +
                        wy * ((1 - wx) * in[y1 * w + x0] + wx * in[y1 * w + x1]);
    }
  }
  return out;
}

}  // namespace detail

template <typename T>
MotionField<T> coarse_to_fine(const Image<T>& src, const Image<T>& tgt, const PyramidConfig& cfg) {
  cfg.validate();
  require_same_extent(src, tgt, "coarse_to_fine");
  auto solve = [&](const Image<T>& s, const Image<T>& t, MotionField<T> f) {
    for (int k = 0; k < cfg.warps_per_level; ++k) f = horn_schunck_level(s, t, f, cfg.lambda, cfg.iterations);
    return f;
  };
  if (cfg.levels == 1) return solve(src, tgt, MotionField<T>(src.width(), src.height()));

  std::vector<int> ws{src.width()}, hs{src.height()};
  for (int l = 1; l < cfg.levels; ++l) {
    ws.push_back(static_cast<int>(std::lround(ws.back() * cfg.scale_factor)));
    hs.push_back(static_cast<int>(std::lround(hs.back() * cfg.scale_factor)));
  }
  require(ws.back() >= 8 && hs.back() >= 8,
          "coarse_to_fine: " + std::to_string(cfg.levels) + " levels shrink the image to " + std::to_string(ws.back()) +
              "x" + std::to_string(hs.back()) + ", below the 8-pixel minimum");

  auto to_vec = [](const Image<T>& im) { return std::vector<double>(im.pixels().begin(), im.pixels().end()); };
  auto to_img = [](const std::vector<double>& p, int w, int h) {
    return Image<T>(w, h, std::vector<T>(p.begin(), p.end()));
  };
  std::vector<Image<T>> ps{src}, pt{tgt};
  for (int l = 1; l < cfg.levels; ++l) {
    const int w = ws[l - 1], h = hs[l - 1];
    ps.push_back(to_img(detail::resize(detail::binomial_smooth(to_vec(ps.back()), w, h), w, h, ws[l], hs[l]), ws[l], hs[l]));
    pt.push_back(to_img(detail::resize(detail::binomial_smooth(to_vec(pt.back()), w, h), w, h, ws[l], hs[l]), ws[l], hs[l]));
  }

  MotionField<T> flow(ws.back(), hs.back());
  for (int l = cfg.levels - 1; l >= 0; --l) {
    if (l != cfg.levels - 1) {
      const int cw = ws[l + 1], ch = hs[l + 1], fw = ws[l], fh = hs[l];
      std::vector<double> u(flow.pixel_count()), v(flow.pixel_count());
      for (std::size_t i = 0; i < u.size(); ++i) {
        u[i] = flow.vectors()[2 * i];
        v[i] = flow.vectors()[2 * i + 1];
      }
      const auto uu = detail::resize(u, cw, ch, fw, fh), vv = detail::resize(v, cw, ch, fw, fh);
      const double sx = static_cast<double>(fw) / cw, sy = static_cast<double>(fh) / ch;
      flow = MotionField<T>(fw, fh);
      for (std::size_t i = 0; i < uu.size(); ++i) {
        flow.vectors()[2 * i] = static_cast<T>(uu[i] * sx);
        flow.vectors()[2 * i + 1] = static_cast<T>(vv[i] * sy);
      }
    }
    flow = solve(ps[l], pt[l], std::move(flow));
  }
  return flow;
}

}  // namespace hstn
