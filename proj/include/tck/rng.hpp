#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace tck {

// Deterministic uniform/normal draws on top of mt19937_64. The standard
// <random> distributions are implementation-defined, so every stream the
// project relies on for reproducible output goes through these helpers.

inline double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;  // [0,1)
}

inline double uniform(std::mt19937_64& gen, double lo, double hi) {
  return lo + (hi - lo) * uniform01(gen);
}

// Inclusive range. Modulo bias is irrelevant for the span sizes used here.
inline std::int64_t uniform_int(std::mt19937_64& gen, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(gen() % static_cast<std::uint64_t>(hi - lo + 1));
}

inline double normal01(std::mt19937_64& gen) {
  // Box-Muller, one value per call.
  double u1 = 0.0;
  while (u1 <= 0.0) u1 = uniform01(gen);
  const double u2 = uniform01(gen);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// splitmix64-style mix so per-task streams derived from (seed, index) are
// decorrelated and independent of scheduling.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// First k elements of a random permutation of {0..n-1}, sorted ascending.
inline std::vector<int> sample_without_replacement(std::mt19937_64& gen, int n, int k) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = 0; i < k; ++i) {
    const int j = static_cast<int>(uniform_int(gen, i, n - 1));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace tck
