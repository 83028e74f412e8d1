#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

namespace photonstat {

/// Seeded generator with hand-written samplers. The standard library's
/// distributions are implementation-defined; these are not, so a seed gives the
/// same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_open0() { return 1.0 - uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  double exponential(double mean) { return -mean * std::log(uniform_open0()); }

  double normal(double mean = 0.0, double sigma = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + sigma * spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_open0()));
    const double phi = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return mean + sigma * r * std::cos(phi);
  }

  /// Number of failures before the first success of a Bernoulli(p) sequence.
  std::uint64_t geometric(double p) {
    if (p >= 1.0) return 0;
    if (p <= 0.0) return std::numeric_limits<std::uint64_t>::max();
    const double k = std::floor(std::log(uniform_open0()) / std::log1p(-p));
    if (k >= 1.8e19) return std::numeric_limits<std::uint64_t>::max();
    return static_cast<std::uint64_t>(k);
  }

  /// Poisson variate: multiplication method for small means, rounded normal
  /// approximation above 500.
  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean > 500.0) {
      const double x = std::floor(normal(mean, std::sqrt(mean)) + 0.5);
      return x < 0.0 ? 0 : static_cast<std::uint64_t>(x);
    }
    // Split large means so exp(-mean) stays representable.
    std::uint64_t total = 0;
    double remaining = mean;
    while (remaining > 0.0) {
      const double chunk = std::min(remaining, 30.0);
      remaining -= chunk;
      const double limit = std::exp(-chunk);
      double prod = uniform_open0();
      while (prod > limit) {
        ++total;
        prod *= uniform_open0();
      }
    }
    return total;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace photonstat
