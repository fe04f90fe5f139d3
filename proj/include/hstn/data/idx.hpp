#pragma once

// IDX archives: big-endian u32 magic (0x00000803 images, 0x00000801 labels),
// big-endian u32 extents, then unsigned bytes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "hstn/fileio.hpp"
#include "hstn/image.hpp"

namespace hstn::data {

inline constexpr std::uint32_t kIdxImages = 0x00000803;
inline constexpr std::uint32_t kIdxLabels = 0x00000801;

struct LabeledImage {
  Image<float> image;
  int label = 0;
};

namespace detail {

inline std::uint32_t get_be32(const std::string& b, std::size_t pos) {
  if (pos + 4 > b.size()) throw FormatError("idx: truncated header", pos);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(b[pos + i]);
  return v;
}

inline void put_be32(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t check_magic(const std::string& b, std::uint32_t expected) {
  const std::uint32_t magic = get_be32(b, 0);
  if (magic != expected) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "idx: bad magic 0x%08X (expected 0x%08X)", magic, expected);
    throw FormatError(buf, 0);
  }
  return magic;
}

}  // namespace detail

inline std::vector<Image<float>> decode_idx_images(const std::string& b) {
  detail::check_magic(b, kIdxImages);
  const std::uint32_t n = detail::get_be32(b, 4), rows = detail::get_be32(b, 8),
                      cols = detail::get_be32(b, 12);
  std::vector<Image<float>> out;
  if (n == 0) return out;
  if (rows == 0 || cols == 0) throw FormatError("idx: zero image extent", 8);
  const std::size_t per = static_cast<std::size_t>(rows) * cols;
  const std::size_t need = 16 + per * n;
  if (b.size() < need) throw FormatError("idx: truncated payload (need " + std::to_string(need) + " bytes)", b.size());
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::vector<float> px(per);
    for (std::size_t k = 0; k < per; ++k)
      px[k] = static_cast<float>(static_cast<unsigned char>(b[16 + i * per + k])) / 255.0f;
    out.emplace_back(static_cast<int>(cols), static_cast<int>(rows), std::move(px));
  }
  return out;
}

inline std::vector<int> decode_idx_labels(const std::string& b) {
  detail::check_magic(b, kIdxLabels);
  const std::uint32_t n = detail::get_be32(b, 4);
  if (b.size() < 8 + static_cast<std::size_t>(n))
    throw FormatError("idx: truncated label payload", b.size());
  std::vector<int> out(n);
  for (std::uint32_t i = 0; i < n; ++i) out[i] = static_cast<unsigned char>(b[8 + i]);
  return out;
}

// Pixels are quantized with round(clamp(v, 0, 1) * 255).
inline std::string encode_idx_images(const std::vector<Image<float>>& imgs) {
  std::string out;
  detail::put_be32(out, kIdxImages);
  detail::put_be32(out, static_cast<std::uint32_t>(imgs.size()));
  const int w = imgs.empty() ? 0 : imgs[0].width(), h = imgs.empty() ? 0 : imgs[0].height();
  detail::put_be32(out, static_cast<std::uint32_t>(h));
  detail::put_be32(out, static_cast<std::uint32_t>(w));
  for (const auto& img : imgs) {
    require(img.width() == w && img.height() == h, "idx: images differ in extent");
    for (float v : img.pixels())
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f))));
  }
  return out;
}

inline std::string encode_idx_labels(const std::vector<int>& labels) {
  std::string out;
  detail::put_be32(out, kIdxLabels);
  detail::put_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    require(l >= 0 && l < 256, "idx: label out of byte range");
    out.push_back(static_cast<char>(l));
  }
  return out;
}

inline std::vector<Image<float>> read_idx_images(const std::string& path) {
  return decode_idx_images(read_file_bytes(path));
}

inline std::vector<int> read_idx_labels(const std::string& path) {
  return decode_idx_labels(read_file_bytes(path));
}

inline std::vector<LabeledImage> read_idx_labeled(const std::string& images_path, const std::string& labels_path) {
  auto imgs = read_idx_images(images_path);
  const auto labels = read_idx_labels(labels_path);
  if (imgs.size() != labels.size())
    throw FormatError("idx: " + std::to_string(imgs.size()) + " images but " +
                          std::to_string(labels.size()) + " labels",
                      4);
  std::vector<LabeledImage> out;
  out.reserve(imgs.size());
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    if (labels[i] > 9) throw FormatError("idx: label " + std::to_string(labels[i]) + " is not a digit", 8 + i);
    out.push_back({std::move(imgs[i]), labels[i]});
  }
  return out;
}

}  // namespace hstn::data
