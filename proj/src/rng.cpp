#include "pses/rng.hpp"

#include <cmath>

namespace pses {

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  double u2 = uniform();
  while (u1 <= 1e-300) u1 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

double Rng::trunc_normal(double stddev) {
  for (;;) {
    double v = normal();
    if (v >= -2.0 && v <= 2.0) return v * stddev;
  }
}

uint64_t Rng::below(uint64_t n) {
  // Rejection sampling over the top bits keeps the stream unbiased.
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t v = gen_();
  while (v >= limit) v = gen_();
  return v % n;
}

}  // namespace pses
