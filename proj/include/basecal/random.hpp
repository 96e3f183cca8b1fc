#pragma once

// Portable draws on top of std::mt19937_64, whose output sequence is fixed
// by the standard. The <random> distributions are implementation-defined,
// so seeded runs use these instead.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace basecal::rng {

using Engine = std::mt19937_64;

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Engine& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

inline double uniform(Engine& g, double lo, double hi) { return lo + (hi - lo) * uniform01(g); }

// Uniform integer in [0, n) by rejection.
inline std::uint64_t below(Engine& g, std::uint64_t n) {
  const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
  std::uint64_t x;
  do x = g();
  while (x >= limit);
  return x % n;
}

inline double normal(Engine& g) {
  double u1;
  do u1 = uniform01(g);
  while (u1 <= 0.0);
  const double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline bool bernoulli(Engine& g, double p) { return uniform01(g) < p; }

template <typename T>
void shuffle(std::span<T> items, Engine& g) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[below(g, i)]);
  }
}

}  // namespace basecal::rng
