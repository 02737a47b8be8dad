#pragma once

#include <cstdint>
#include <random>

namespace pses {

/// Deterministic random source. Distributions are derived from raw mt19937_64
/// output with fixed arithmetic, so streams are bit-identical for a given seed
/// regardless of standard-library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal();

  /// Normal(0, std) resampled until within 2 std (truncated normal).
  double trunc_normal(double stddev);

  /// Uniform integer in [0, n).
  uint64_t below(uint64_t n);

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pses
