#pragma once

// On-disk dataset layouts.
//   labeled: images.idx, labels.idx
//   pairs:   pair_NNNN_src.pgm, pair_NNNN_tgt.pgm, pair_NNNN_gt.flo

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "hstn/data/idx.hpp"
#include "hstn/data/io.hpp"
#include "hstn/data/synth.hpp"

namespace hstn::data {

inline std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline void write_labeled_dir(const std::string& dir, const std::vector<LabeledImage>& set) {
  std::vector<Image<float>> imgs;
  std::vector<int> labels;
  for (const auto& s : set) {
    imgs.push_back(s.image);
    labels.push_back(s.label);
  }
  write_file_atomic(join(dir, "images.idx"), encode_idx_images(imgs));
  write_file_atomic(join(dir, "labels.idx"), encode_idx_labels(labels));
}

inline std::vector<LabeledImage> read_labeled_dir(const std::string& dir) {
  return read_idx_labeled(join(dir, "images.idx"), join(dir, "labels.idx"));
}

inline std::string pair_name(std::size_t i, const char* part, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "pair_%04zu_%s.%s", i, part, ext);
  return buf;
}

inline std::vector<std::string> write_pairs_dir(const std::string& dir, const std::vector<WarpPair<float>>& pairs) {
  std::vector<std::string> files;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string s = pair_name(i, "src", "pgm"), t = pair_name(i, "tgt", "pgm"), g = pair_name(i, "gt", "flo");
    write_pgm(join(dir, s), pairs[i].src);
    write_pgm(join(dir, t), pairs[i].tgt);
    write_flo(join(dir, g), pairs[i].gt_field);
    files.insert(files.end(), {s, t, g});
  }
  return files;
}

// Reads consecutively numbered pairs starting at 0.
inline std::vector<WarpPair<float>> read_pairs_dir(const std::string& dir) {
  require(std::filesystem::is_directory(dir), "pairs directory '" + dir + "' does not exist");
  std::vector<WarpPair<float>> out;
  for (std::size_t i = 0;; ++i) {
    const std::string s = join(dir, pair_name(i, "src", "pgm"));
    if (!std::filesystem::exists(s)) break;
    WarpPair<float> p;
    p.src = read_pgm(s);
    p.tgt = read_pgm(join(dir, pair_name(i, "tgt", "pgm")));
    p.gt_field = read_flo(join(dir, pair_name(i, "gt", "flo")));
    require(p.src.same_extent(p.tgt) && p.gt_field.same_extent(p.src),
            "pair " + std::to_string(i) + " in '" + dir + "' has inconsistent extents");
    out.push_back(std::move(p));
  }
  require(!out.empty(), "no pairs found in '" + dir + "'");
  return out;
}

}  // namespace hstn::data
