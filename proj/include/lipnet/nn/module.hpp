#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lipnet/tape.hpp"
#include "lipnet/tensor.hpp"

namespace lipnet::nn {

enum class Mode { train, eval };

using Rng = std::mt19937_64;

// Uniform double in [0, 1) from the top 53 bits; fixed mapping across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Integer in [lo, hi] inclusive.
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(rng() % span);
}

template <std::floating_point T>
void init_uniform(Tensor<T>& t, double bound, Rng& rng) {
  for (auto& v : t.data()) v = static_cast<T>(uniform(rng, -bound, bound));
}

/// A named tensor owned by a module. Trainable blobs point at their
/// Parameter; buffers (BN running statistics) have param == nullptr.
template <std::floating_point T>
struct NamedBlob {
  std::string name;
  Tensor<T>* value = nullptr;
  Parameter<T>* param = nullptr;
};

template <std::floating_point T>
using BlobList = std::vector<NamedBlob<T>>;

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

template <std::floating_point T>
void add_param(BlobList<T>& out, const std::string& prefix, const std::string& name,
               Parameter<T>& p) {
  out.push_back({join_name(prefix, name), &p.value, &p});
}

template <std::floating_point T>
void add_buffer(BlobList<T>& out, const std::string& prefix, const std::string& name,
                Tensor<T>& t) {
  out.push_back({join_name(prefix, name), &t, nullptr});
}

template <std::floating_point T>
std::size_t count_trainable(const BlobList<T>& blobs) {
  std::size_t n = 0;
  for (const auto& b : blobs) {
    if (b.param) n += b.value->size();
  }
  return n;
}

template <std::floating_point T>
void set_frozen(BlobList<T>& blobs, bool frozen) {
  for (auto& b : blobs) {
    if (b.param) b.param->frozen = frozen;
  }
}

}  // namespace lipnet::nn
