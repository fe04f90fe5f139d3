#pragma once

// Binary PGM ("P5", maxval 255) and Middlebury FLO ("PIEH", i32 width,
// i32 height, interleaved f32 u, v; little-endian).

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "hstn/fileio.hpp"
#include "hstn/image.hpp"

namespace hstn::data {

inline constexpr float kFloMagic = 202021.25f;

namespace detail {

// Reads one unsigned decimal header token, skipping whitespace and comments.
inline long pgm_token(const std::string& b, std::size_t& pos) {
  for (;;) {
    while (pos < b.size() && std::isspace(static_cast<unsigned char>(b[pos]))) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  long v = 0;
  while (pos < b.size() && std::isdigit(static_cast<unsigned char>(b[pos]))) {
    v = v * 10 + (b[pos] - '0');
    if (v > 1'000'000) throw FormatError("pgm: header value too large", start);
    ++pos;
  }
  if (pos == start) throw FormatError("pgm: malformed header", pos);
  return v;
}

inline void put_le32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_le32(const std::string& b, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + i])) << (8 * i);
  return v;
}

}  // namespace detail

inline Image<float> decode_pgm(const std::string& b) {
  if (b.size() < 2 || b[0] != 'P' || b[1] != '5') throw FormatError("pgm: expected P5 magic", 0);
  std::size_t pos = 2;
  const long w = detail::pgm_token(b, pos), h = detail::pgm_token(b, pos), maxval = detail::pgm_token(b, pos);
  if (w < 1 || h < 1) throw FormatError("pgm: non-positive extent", pos);
  if (maxval != 255) throw FormatError("pgm: only maxval 255 is supported", pos);
  if (pos >= b.size() || !std::isspace(static_cast<unsigned char>(b[pos])))
    throw FormatError("pgm: missing separator before raster", pos);
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (b.size() - pos < n) throw FormatError("pgm: truncated raster", b.size());
  std::vector<float> px(n);
  for (std::size_t i = 0; i < n; ++i) px[i] = static_cast<unsigned char>(b[pos + i]) / 255.0f;
  return Image<float>(static_cast<int>(w), static_cast<int>(h), std::move(px));
}

// Intensities are clamped to [0, 1] and rounded to the nearest 1/255.
template <typename T>
std::string encode_pgm(const Image<T>& img) {
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  for (T v : img.pixels()) {
    const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

inline MotionField<float> decode_flo(const std::string& b) {
  if (b.size() < 12) throw FormatError("flo: truncated header", b.size());
  if (std::bit_cast<float>(detail::get_le32(b, 0)) != kFloMagic) throw FormatError("flo: bad magic", 0);
  const auto w = static_cast<std::int32_t>(detail::get_le32(b, 4));
  const auto h = static_cast<std::int32_t>(detail::get_le32(b, 8));
  if (w < 1 || h < 1 || w > 100000 || h > 100000) throw FormatError("flo: invalid extent", 4);
  const std::size_t n = 2 * static_cast<std::size_t>(w) * h;
  if (b.size() < 12 + 4 * n) throw FormatError("flo: truncated payload", b.size());
  std::vector<float> vec(n);
  for (std::size_t i = 0; i < n; ++i) {
    vec[i] = std::bit_cast<float>(detail::get_le32(b, 12 + 4 * i));
    if (!std::isfinite(vec[i])) throw FormatError("flo: non-finite component", 12 + 4 * i);
  }
  return MotionField<float>(w, h, std::move(vec));
}

template <typename T>
std::string encode_flo(const MotionField<T>& f) {
  std::string out;
  detail::put_le32(out, std::bit_cast<std::uint32_t>(kFloMagic));
  detail::put_le32(out, static_cast<std::uint32_t>(f.width()));
  detail::put_le32(out, static_cast<std::uint32_t>(f.height()));
  for (T c : f.vectors()) detail::put_le32(out, std::bit_cast<std::uint32_t>(static_cast<float>(c)));
  return out;
}

inline Image<float> read_pgm(const std::string& path) { return decode_pgm(read_file_bytes(path)); }
inline MotionField<float> read_flo(const std::string& path) { return decode_flo(read_file_bytes(path)); }

template <typename T>
void write_pgm(const std::string& path, const Image<T>& img) {
  write_file_atomic(path, encode_pgm(img));
}

template <typename T>
void write_flo(const std::string& path, const MotionField<T>& f) {
  write_file_atomic(path, encode_flo(f));
}

}  // namespace hstn::data
