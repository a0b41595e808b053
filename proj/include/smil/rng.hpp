#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace smil {

/// Seeded pseudo-random stream. Single consumer; copies fork the state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::uint64_t next_u64() { return engine_(); }

  std::vector<double> normals(std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = normal();
    return out;
  }

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = index(i);
      std::swap(idx[i - 1], idx[j]);
    }
    return idx;
  }

  /// First `k` entries of a fresh permutation (sampling without replacement).
  std::vector<std::size_t> sample(std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k && i < n; ++i) {
      std::size_t j = i + index(n - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(std::min(k, n));
    return idx;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace smil
