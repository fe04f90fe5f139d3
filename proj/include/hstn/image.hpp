#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hstn/errors.hpp"

namespace hstn {

// Dense single-channel raster, row-major.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, T fill = T(0)) : width_(width), height_(height) {
    require(width >= 1 && height >= 1, "image extents must be positive");
    pixels_.assign(static_cast<std::size_t>(width) * height, fill);
  }
  Image(int width, int height, std::vector<T> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    require(width >= 1 && height >= 1, "image extents must be positive");
    require(pixels_.size() == static_cast<std::size_t>(width) * height,
            "pixel count does not match width*height");
    require(std::all_of(pixels_.begin(), pixels_.end(), [](T v) { return std::isfinite(v); }),
            "image contains non-finite intensity");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return pixels_.size(); }

  T& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  T at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  T& operator[](std::size_t i) { return pixels_[i]; }
  T operator[](std::size_t i) const { return pixels_[i]; }

  std::vector<T>& pixels() { return pixels_; }
  const std::vector<T>& pixels() const { return pixels_; }

  bool same_extent(const Image& o) const { return width_ == o.width_ && height_ == o.height_; }

  template <typename U>
  Image<U> cast() const {
    return Image<U>(width_, height_, std::vector<U>(pixels_.begin(), pixels_.end()));
  }

  friend bool operator==(const Image& a, const Image& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.pixels_ == b.pixels_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> pixels_;
};

// Per-pixel (u, v) displacement in pixel units, interleaved row-major.
// Under backward mapping, output pixel p reads the source at p + (u, v).
template <typename T>
class MotionField {
 public:
  MotionField() = default;
  MotionField(int width, int height) : width_(width), height_(height) {
    require(width >= 1 && height >= 1, "field extents must be positive");
    vectors_.assign(2 * static_cast<std::size_t>(width) * height, T(0));
  }
  MotionField(int width, int height, std::vector<T> vectors)
      : width_(width), height_(height), vectors_(std::move(vectors)) {
    require(width >= 1 && height >= 1, "field extents must be positive");
    require(vectors_.size() == 2 * static_cast<std::size_t>(width) * height,
            "vector count does not match 2*width*height");
    require(std::all_of(vectors_.begin(), vectors_.end(), [](T v) { return std::isfinite(v); }),
            "field contains non-finite component");
  }

  static MotionField constant(int width, int height, T u, T v) {
    MotionField f(width, height);
    for (std::size_t i = 0; i < f.pixel_count(); ++i) {
      f.vectors_[2 * i] = u;
      f.vectors_[2 * i + 1] = v;
    }
    return f;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  T& u(int x, int y) { return vectors_[2 * (static_cast<std::size_t>(y) * width_ + x)]; }
  T& v(int x, int y) { return vectors_[2 * (static_cast<std::size_t>(y) * width_ + x) + 1]; }
  T u(int x, int y) const { return vectors_[2 * (static_cast<std::size_t>(y) * width_ + x)]; }
  T v(int x, int y) const { return vectors_[2 * (static_cast<std::size_t>(y) * width_ + x) + 1]; }

  std::vector<T>& vectors() { return vectors_; }
  const std::vector<T>& vectors() const { return vectors_; }

  template <typename Other>
  bool same_extent(const Other& o) const {
    return width_ == o.width() && height_ == o.height();
  }

  template <typename U>
  MotionField<U> cast() const {
    return MotionField<U>(width_, height_, std::vector<U>(vectors_.begin(), vectors_.end()));
  }

  T max_abs_component() const {
    T m = 0;
    for (T c : vectors_) m = std::max(m, std::abs(c));
    return m;
  }

  friend bool operator==(const MotionField& a, const MotionField& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.vectors_ == b.vectors_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> vectors_;
};

template <typename A, typename B>
void require_same_extent(const A& a, const B& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw InvalidInput(std::string(what) + ": extent mismatch (" + std::to_string(a.width()) +
                       "x" + std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                       "x" + std::to_string(b.height()) + ")");
  }
}

using ImageF = Image<float>;
using ImageD = Image<double>;
using FieldF = MotionField<float>;
using FieldD = MotionField<double>;

}  // namespace hstn
