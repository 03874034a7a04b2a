#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace baris {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Named-stream splitter: every random consumer derives its own stream from
// (root seed, purpose string), so adding a consumer never perturbs the others.
inline uint64_t stream_seed(uint64_t seed, std::string_view purpose) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (char c : purpose) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return splitmix64(seed ^ splitmix64(h));
}

inline std::mt19937_64 stream_rng(uint64_t seed, std::string_view purpose) {
  return std::mt19937_64(stream_seed(seed, purpose));
}

}  // namespace baris
