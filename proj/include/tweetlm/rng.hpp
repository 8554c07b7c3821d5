#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace tweetlm::rng {

// All randomness in the project flows through mt19937_64 plus the hand-rolled
// mappings below. std::*_distribution is avoided because its output is
// implementation-defined; these mappings make a seed fully pin an artifact.

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::mt19937_64 make_engine(uint64_t seed) {
  return std::mt19937_64(splitmix64(seed));
}

// Independent stream for (seed, index) pairs, e.g. one per batch example.
inline std::mt19937_64 derive_engine(uint64_t seed, uint64_t stream) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x51ed2701ULL)));
}

// Uniform in [0, 1) with 53 bits of precision.
inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). Modulo bias is negligible for n << 2^64.
inline uint64_t uniform_index(std::mt19937_64& g, uint64_t n) {
  return g() % n;
}

inline bool bernoulli(std::mt19937_64& g, double p) { return uniform01(g) < p; }

// Box-Muller; one value per call keeps the stream layout simple.
inline double normal(std::mt19937_64& g) {
  double u1 = uniform01(g);
  double u2 = uniform01(g);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Normal(0, stddev^2) resampled until within clip stddevs.
inline double trunc_normal(std::mt19937_64& g, double stddev, double clip = 2.0) {
  for (;;) {
    double z = normal(g);
    if (std::fabs(z) <= clip) return z * stddev;
  }
}

inline void shuffle_indices(std::vector<int64_t>& idx, std::mt19937_64& g) {
  for (int64_t i = static_cast<int64_t>(idx.size()) - 1; i > 0; --i) {
    int64_t j = static_cast<int64_t>(uniform_index(g, static_cast<uint64_t>(i + 1)));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
}

}  // namespace tweetlm::rng
