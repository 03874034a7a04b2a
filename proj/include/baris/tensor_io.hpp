#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>

#include "baris/tensor.hpp"

namespace baris {

// BKT1 binary tensor format:
//   magic "BKT1", u8 dtype (0 = f32, 1 = f64), u8 rank,
//   rank x u32 little-endian dims, row-major payload.
// Assumes a little-endian host.

template <typename T>
void save_bkt1(const Tensor<T>& t, const std::string& path) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f.write("BKT1", 4);
  uint8_t dtype = std::is_same_v<T, float> ? 0 : 1;
  uint8_t rank = static_cast<uint8_t>(t.rank());
  f.write(reinterpret_cast<const char*>(&dtype), 1);
  f.write(reinterpret_cast<const char*>(&rank), 1);
  for (int64_t d : t.shape) {
    uint32_t d32 = static_cast<uint32_t>(d);
    f.write(reinterpret_cast<const char*>(&d32), 4);
  }
  f.write(reinterpret_cast<const char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(T)));
  if (!f) throw std::runtime_error("write failed: " + path);
}

template <typename T>
Tensor<T> load_bkt1(const std::string& path) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for read: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "BKT1", 4) != 0)
    throw std::runtime_error("bad BKT1 magic in " + path);
  uint8_t dtype = 0, rank = 0;
  f.read(reinterpret_cast<char*>(&dtype), 1);
  f.read(reinterpret_cast<char*>(&rank), 1);
  uint8_t expect = std::is_same_v<T, float> ? 0 : 1;
  if (dtype != expect)
    throw std::runtime_error("dtype mismatch in " + path + ": file has code " +
                             std::to_string(dtype));
  Shape shape(rank);
  for (int i = 0; i < rank; ++i) {
    uint32_t d32 = 0;
    f.read(reinterpret_cast<char*>(&d32), 4);
    shape[static_cast<size_t>(i)] = d32;
  }
  Tensor<T> t(shape);
  f.read(reinterpret_cast<char*>(t.data.data()),
         static_cast<std::streamsize>(t.data.size() * sizeof(T)));
  if (!f) throw std::runtime_error("truncated BKT1 file: " + path);
  return t;
}

}  // namespace baris
