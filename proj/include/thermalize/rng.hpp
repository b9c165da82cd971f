#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

#include "thermalize/errors.hpp"

namespace thermalize {

/// Deterministic random source. All draws are derived from mt19937_64 raw
/// output through fixed arithmetic, so identical seeds give bit-identical
/// streams on every platform (no reliance on std::*_distribution, whose
/// sequences are implementation defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; one spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// Exponential waiting time with the given total rate.
  double exponential(double rate) {
    if (rate <= 0.0) throw parameter_error("exponential rate must be > 0");
    return -std::log1p(-uniform01()) / rate;
  }

  /// Index into `weights` chosen with probability weight/total.
  std::size_t pick(std::span<const double> weights, double total) {
    double x = uniform01() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (x < acc) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace thermalize
