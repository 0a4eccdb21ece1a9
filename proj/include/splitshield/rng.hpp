#pragma once

#include <cstdint>
#include <random>

namespace splitshield {

// All randomness in the project flows through explicitly seeded engines so
// that identical configs reproduce byte-identical outputs.
using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed) { return Rng(seed); }

// Derives a stream-local seed so independent consumers (per-image, per-stage)
// do not share a generator.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL + stream * 0xbf58476d1ce4e5b9ULL);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

inline float uniform(Rng& g, float lo, float hi) {
  std::uniform_real_distribution<float> d(lo, hi);
  return d(g);
}

inline float gaussian(Rng& g, float mean, float stddev) {
  std::normal_distribution<float> d(mean, stddev);
  return d(g);
}

inline int uniform_int(Rng& g, int lo, int hi) {  // inclusive
  std::uniform_int_distribution<int> d(lo, hi);
  return d(g);
}

}  // namespace splitshield
