#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace chordtex {

// Deterministic random source. mt19937_64 output is fully specified by the
// standard, and all distributions here are derived from raw bits, so the same
// seed yields the same stream on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t bits() { return engine_(); }

  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return n == 0 ? 0 : bits() % n; }

  bool coin() { return (bits() & 1u) != 0; }

  bool bernoulli(double p) { return uniform01() < p; }

  // Standard normal via Box-Muller. Two uniforms per draw; the second
  // Box-Muller value is discarded to keep the stream position predictable.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <typename Derived>
  void fillNormal(Eigen::MatrixBase<Derived>& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        m(r, c) = static_cast<typename Derived::Scalar>(normal());
  }

  template <typename Derived>
  void fillUniform(Eigen::MatrixBase<Derived>& m, double lo, double hi) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        m(r, c) = static_cast<typename Derived::Scalar>(lo + (hi - lo) * uniform01());
  }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 step; used to derive independent stream seeds from a base seed.
inline uint64_t mixSeed(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline uint64_t deriveSeed(uint64_t base, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  return mixSeed(mixSeed(mixSeed(base ^ mixSeed(a)) ^ mixSeed(b)) ^ mixSeed(c));
}

// FNV-1a over a string; stable ids for songs/segments.
inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace chordtex
