#pragma once

#include <string>
#include <vector>

#include "baris/autodiff.hpp"
#include "baris/rng.hpp"

namespace baris {

// Parameter tags used by the tuning-scheme accounting: weight | bias | norm.
template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
  std::string tag;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

template <typename T>
Tensor<T> kaiming_uniform(const Shape& shape, int64_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> t(shape);
  for (auto& v : t.data) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
int64_t total_numel(const ParamList<T>& params) {
  int64_t n = 0;
  for (const auto& p : params) n += p.var.val().numel();
  return n;
}

template <typename T>
void zero_grads(ParamList<T>& params) {
  for (auto& p : params) p.var.zero_grad();
}

// FNV-1a over the raw value bytes; used by the freeze-integrity checks.
template <typename T>
uint64_t param_checksum(const ParamList<T>& params) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : params) {
    const auto* bytes = reinterpret_cast<const uint8_t*>(p.var.val().data.data());
    const size_t n = p.var.val().data.size() * sizeof(T);
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

}  // namespace baris
