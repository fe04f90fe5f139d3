#pragma once

// Bending-energy and smoothness penalties on a flow field, with subgradients.
// Both are L1 penalties averaged over the stencil outputs they are defined on.

#include <cmath>
#include <vector>

#include "hstn/image.hpp"

namespace hstn {

struct RegWeights {
  double alpha = 0.01;  // bending energy
  double beta = 1.0;    // smoothness

  void validate() const {
    require(alpha >= 0 && beta >= 0, "regularizer weights must be non-negative");
  }
};

namespace detail {

template <typename T>
T sign0(T x) {
  return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0));
}

// Calls fn(center, left, right, up, down) with flat component indices for every
// interior pixel and both components.
template <typename T, typename Fn>
void for_each_laplacian(const MotionField<T>& w, Fn&& fn) {
  const int W = w.width(), H = w.height();
  for (int y = 1; y + 1 < H; ++y)
    for (int x = 1; x + 1 < W; ++x)
      for (int c = 0; c < 2; ++c) {
        auto idx = [&](int xx, int yy) { return 2 * (static_cast<std::size_t>(yy) * W + xx) + c; };
        fn(idx(x, y), idx(x - 1, y), idx(x + 1, y), idx(x, y - 1), idx(x, y + 1));
      }
}

// Calls fn(from, to) for every forward difference (both axes, both components).
template <typename T, typename Fn>
void for_each_forward_diff(const MotionField<T>& w, Fn&& fn) {
  const int W = w.width(), H = w.height();
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 2; ++c) {
        const std::size_t p = 2 * (static_cast<std::size_t>(y) * W + x) + c;
        if (x + 1 < W) fn(p, p + 2);
        if (y + 1 < H) fn(p, p + 2 * static_cast<std::size_t>(W));
      }
}

inline std::size_t laplacian_count(int W, int H) {
  return 2 * static_cast<std::size_t>(W - 2) * (H - 2);
}

inline std::size_t forward_diff_count(int W, int H) {
  return 2 * (static_cast<std::size_t>(W - 1) * H + static_cast<std::size_t>(W) * (H - 1));
}

}  // namespace detail

template <typename T>
T bending_energy(const MotionField<T>& w) {
  require(w.width() >= 3 && w.height() >= 3, "bending_energy: field smaller than 3x3");
  const auto& f = w.vectors();
  T sum = 0;
  detail::for_each_laplacian(w, [&](std::size_t c, std::size_t l, std::size_t r, std::size_t u,
                                    std::size_t d) {
    sum += std::abs(f[l] + f[r] + f[u] + f[d] - T(4) * f[c]);
  });
  return sum / static_cast<T>(detail::laplacian_count(w.width(), w.height()));
}

// Requires at least one forward difference, i.e. a field of two or more pixels.
template <typename T>
T smoothness(const MotionField<T>& w) {
  require(w.pixel_count() >= 2, "smoothness: field needs at least two pixels");
  const auto& f = w.vectors();
  T sum = 0;
  detail::for_each_forward_diff(w, [&](std::size_t p, std::size_t q) { sum += std::abs(f[q] - f[p]); });
  return sum / static_cast<T>(detail::forward_diff_count(w.width(), w.height()));
}

template <typename T>
struct RegLossGrad {
  T loss;
  MotionField<T> grad;
};

template <typename T>
RegLossGrad<T> reg_loss_grad(const MotionField<T>& w, const RegWeights& weights) {
  require(w.width() >= 3 && w.height() >= 3, "reg_loss_grad: field smaller than 3x3");
  weights.validate();
  const auto& f = w.vectors();
  RegLossGrad<T> r{T(0), MotionField<T>(w.width(), w.height())};
  auto& g = r.grad.vectors();

  const T alpha = static_cast<T>(weights.alpha), beta = static_cast<T>(weights.beta);
  if (alpha != T(0)) {
    const T scale = alpha / static_cast<T>(detail::laplacian_count(w.width(), w.height()));
    T sum = 0;
    detail::for_each_laplacian(w, [&](std::size_t c, std::size_t l, std::size_t rr, std::size_t u,
                                      std::size_t d) {
      const T lap = f[l] + f[rr] + f[u] + f[d] - T(4) * f[c];
      sum += std::abs(lap);
      const T s = scale * detail::sign0(lap);
      g[l] += s;
      g[rr] += s;
      g[u] += s;
      g[d] += s;
      g[c] -= T(4) * s;
    });
    r.loss += scale * sum;
  }
  if (beta != T(0)) {
    const T scale = beta / static_cast<T>(detail::forward_diff_count(w.width(), w.height()));
    T sum = 0;
    detail::for_each_forward_diff(w, [&](std::size_t p, std::size_t q) {
      const T d = f[q] - f[p];
      sum += std::abs(d);
      const T s = scale * detail::sign0(d);
      g[q] += s;
      g[p] -= s;
    });
    r.loss += scale * sum;
  }
  return r;
}

// Marks every flat component index that participates in a stencil whose output
// magnitude is below `threshold` (where the L1 subgradient is not a gradient).
template <typename T>
std::vector<bool> reg_kink_mask(const MotionField<T>& w, const RegWeights& weights, T threshold) {
  const auto& f = w.vectors();
  std::vector<bool> mask(f.size(), false);
  if (weights.alpha != 0) {
    detail::for_each_laplacian(w, [&](std::size_t c, std::size_t l, std::size_t r, std::size_t u,
                                      std::size_t d) {
      if (std::abs(f[l] + f[r] + f[u] + f[d] - T(4) * f[c]) < threshold)
        mask[c] = mask[l] = mask[r] = mask[u] = mask[d] = true;
    });
  }
  if (weights.beta != 0) {
    detail::for_each_forward_diff(w, [&](std::size_t p, std::size_t q) {
      if (std::abs(f[q] - f[p]) < threshold) mask[p] = mask[q] = true;
    });
  }
  return mask;
}

}  // namespace hstn
