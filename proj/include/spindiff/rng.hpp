#pragma once

// Counter-based deterministic RNG. Every stochastic site in the project owns
// a (seed, stream) pair; draws are a stateless mix of key and counter, so
// per-item streams can be handed to parallel workers and still reproduce the
// sequential run bit for bit. No wall-clock seeding anywhere.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "spindiff/binio.hpp"

namespace spindiff {

namespace detail {

// splitmix64 finalizer; full-period bijective mixer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

// Derives a child seed from a master seed and a purpose tag, e.g.
// derive_seed(master, "sft.batch"). Stable across runs and platforms.
inline std::uint64_t derive_seed(std::uint64_t master, const std::string& tag) {
  return detail::mix64(master ^ fnv1a64_str(tag));
}

inline std::uint64_t derive_seed(std::uint64_t master, const std::string& tag,
                                 std::uint64_t index) {
  return detail::mix64(derive_seed(master, tag) ^ detail::mix64(index));
}

class CounterRng {
public:
  CounterRng() : CounterRng(0, 0) {}
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(detail::mix64(seed ^ detail::mix64(stream * 0x9e3779b97f4a7c15ull + 1))) {}

  std::uint64_t next_u64() { return detail::mix64(key_ + counter_++ * 0x9e3779b97f4a7c15ull); }

  // [0, 1), 53-bit resolution
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // (0, 1]
  double uniform01_open_low() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform over {0, ..., n-1} via rejection; unbiased.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) return 0;
    std::uint64_t limit = ~0ull - ~0ull % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Box-Muller; caches the second deviate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01_open_low();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  void normal_span(std::span<double> out) {
    for (double& x : out) x = normal();
  }

  std::vector<double> normal_vec(std::size_t n) {
    std::vector<double> v(n);
    normal_span(v);
    return v;
  }

  // Categorical draw from nonnegative weights (need not be normalized).
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform01() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace spindiff
