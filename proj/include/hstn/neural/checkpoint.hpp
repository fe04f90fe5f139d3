#pragma once

// Flat binary parameter container:
//   "HSTN0001"
//   repeated: u32 name_len, name bytes, u32 rank, u32 extents[rank], f32 values[]
// All integers and floats little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "hstn/neural/tensor.hpp"

namespace hstn::nn {

inline constexpr char kCheckpointMagic[8] = {'H', 'S', 'T', 'N', '0', '0', '0', '1'};

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw FormatError("checkpoint: truncated integer", pos);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const std::vector<NamedArray>& arrays) {
  std::string out(kCheckpointMagic, 8);
  for (const auto& a : arrays) {
    require(shape_size(a.shape) == a.values.size(), "checkpoint: '" + a.name + "' shape mismatch");
    detail::put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    detail::put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto e : a.shape) detail::put_u32(out, static_cast<std::uint32_t>(e));
    for (float f : a.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline std::vector<NamedArray> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw FormatError("checkpoint: bad magic", 0);
  std::vector<NamedArray> out;
  std::size_t pos = 8;
  while (pos < bytes.size()) {
    NamedArray a;
    const std::uint32_t len = detail::get_u32(bytes, pos);
    if (pos + len > bytes.size()) throw FormatError("checkpoint: truncated name", pos);
    a.name = bytes.substr(pos, len);
    pos += len;
    const std::uint32_t rank = detail::get_u32(bytes, pos);
    for (std::uint32_t i = 0; i < rank; ++i) a.shape.push_back(detail::get_u32(bytes, pos));
    const std::size_t n = shape_size(a.shape);
    if (pos + 4 * n > bytes.size()) throw FormatError("checkpoint: truncated values of '" + a.name + "'", pos);
    a.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) a.values[i] = std::bit_cast<float>(detail::get_u32(bytes, pos));
    out.push_back(std::move(a));
  }
  return out;
}

template <typename T>
std::vector<NamedArray> snapshot(const std::vector<Param<T>*>& params) {
  std::vector<NamedArray> out;
  for (const auto* p : params)
    out.push_back({p->name, p->tensor.shape(),
                   std::vector<float>(p->tensor.values().begin(), p->tensor.values().end())});
  return out;
}

// Copies every array whose name matches a parameter. Returns the number of
// parameters restored; shape mismatches are errors.
template <typename T>
std::size_t restore(const std::vector<NamedArray>& arrays, const std::vector<Param<T>*>& params) {
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : arrays) by_name[a.name] = &a;
  std::size_t restored = 0;
  for (auto* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) continue;
    require(it->second->shape == p->tensor.shape(),
            "checkpoint: shape mismatch for '" + p->name + "': stored " +
                shape_str(it->second->shape) + ", model " + shape_str(p->tensor.shape()));
    p->tensor.values().assign(it->second->values.begin(), it->second->values.end());
    ++restored;
  }
  return restored;
}

}  // namespace hstn::nn
