#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace taskdb {

/// Seeded generator with hand-rolled value mapping so that streams are
/// identical across standard libraries and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform01() {
    return double(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform in (0, 1]; never returns 0.
  double uniform_pos() { return 1.0 - uniform01(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Modulo bias is irrelevant at the ranges used here (n << 2^64).
    return engine_() % n;
  }

  /// Standard normal via Box-Muller.
  double gaussian() {
    double u1 = uniform_pos();
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace taskdb
