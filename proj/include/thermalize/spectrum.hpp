#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "thermalize/errors.hpp"

namespace thermalize {

using BigInt = boost::multiprecision::cpp_int;

/// Natural log of a positive big integer, accurate to double rounding.
inline double log_big(const BigInt& x) {
  if (x <= 0) throw parameter_error("log_big requires a positive value");
  const unsigned bits = static_cast<unsigned>(boost::multiprecision::msb(x));
  if (bits <= 52) return std::log(x.convert_to<double>());
  const unsigned shift = bits - 52;
  const BigInt top = x >> shift;
  return std::log(top.convert_to<double>()) + static_cast<double>(shift) * M_LN2;
}

/// num/den as a double. Each side is reduced to a 53-bit mantissa with its
/// own binary exponent, so the ratio stays accurate however large the
/// operands grow; results outside double range become 0 or infinity.
inline double big_ratio(const BigInt& num, const BigInt& den) {
  if (den == 0) throw parameter_error("big_ratio division by zero");
  if (num == 0) return 0.0;
  auto split = [](const BigInt& x, long& exp2) {
    const BigInt a = boost::multiprecision::abs(x);
    const unsigned bits = static_cast<unsigned>(boost::multiprecision::msb(a));
    if (bits <= 52) {
      exp2 = 0;
      return x.convert_to<double>();
    }
    const unsigned s = bits - 52;
    exp2 = static_cast<long>(s);
    const double m = (a >> s).convert_to<double>();
    return x < 0 ? -m : m;
  };
  long ne = 0, de = 0;
  const double n = split(num, ne);
  const double d = split(den, de);
  return std::ldexp(n / d, static_cast<int>(ne - de));
}

/// Bound-mode frequencies (all > 0, ascending); the input to state counting.
struct ModeSpectrum {
  std::vector<double> frequencies;

  void validate() const {
    if (frequencies.empty()) throw parameter_error("spectrum must contain at least one mode");
    for (double w : frequencies)
      if (!(w > 0.0)) throw parameter_error("spectrum frequencies must be > 0");
    if (!std::is_sorted(frequencies.begin(), frequencies.end()))
      throw parameter_error("spectrum frequencies must be ascending");
  }

  std::size_t size() const { return frequencies.size(); }
};

/// N identical modes of one frequency.
inline ModeSpectrum einstein_spectrum(std::size_t n_modes, double omega = 1.0) {
  if (n_modes == 0) throw parameter_error("n_modes must be >= 1");
  if (!(omega > 0.0)) throw parameter_error("omega must be > 0");
  ModeSpectrum s;
  s.frequencies.assign(n_modes, omega);
  return s;
}

/// Each frequency snapped to the counting grid: quanta[i] = round(w_i/bin),
/// in bin units. Rejects modes that would snap to zero.
inline std::vector<long long> snap_to_grid(const ModeSpectrum& spec, double bin) {
  if (!(bin > 0.0)) throw parameter_error("bin must be > 0");
  std::vector<long long> quanta(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    quanta[i] = std::llround(spec.frequencies[i] / bin);
    if (quanta[i] <= 0)
      throw parameter_error("bin too coarse: a mode frequency snaps to zero quanta");
  }
  return quanta;
}

/// Exact microstate counts per energy bin, measured from the zero-point
/// level. counts[b] is the number of occupancy vectors {n_i} whose energy
/// sum_i n_i * quanta_i falls in bin b.
struct LevelDensity {
  double bin = 0.0;
  double e_max = 0.0;
  std::vector<BigInt> counts;
  std::vector<long long> quanta;  // per-mode energy in bin units

  std::size_t bins() const { return counts.size(); }

  long long bin_index(double e) const {
    if (e < 0.0 || e >= static_cast<double>(bins()) * bin)
      throw parameter_error("energy outside tabulated range");
    return static_cast<long long>(std::floor(e / bin + 1e-12));
  }

  const BigInt& count_at(double e) const { return counts[static_cast<std::size_t>(bin_index(e))]; }
};

/// Dynamic-programming ladder fold: starting from the single zero-quanta
/// state, each mode's occupancy ladder is convolved into the table. Counts
/// are exact integers; frequencies are snapped to the grid first.
inline LevelDensity level_counts(const ModeSpectrum& spec, double e_max, double bin) {
  spec.validate();
  if (!(e_max > 0.0)) throw parameter_error("e_max must be > 0");
  if (!(bin > 0.0)) throw parameter_error("bin must be > 0");
  if (bin > e_max) throw parameter_error("bin must not exceed e_max");

  LevelDensity ld;
  ld.bin = bin;
  ld.e_max = e_max;
  ld.quanta = snap_to_grid(spec, bin);
  const std::size_t nb = static_cast<std::size_t>(std::floor(e_max / bin + 1e-12)) + 1;
  ld.counts.assign(nb, BigInt(0));
  ld.counts[0] = 1;
  for (long long q : ld.quanta) {
    // In-place ascending fold adds one mode's full ladder (Beyer-Swinehart).
    for (std::size_t b = static_cast<std::size_t>(q); b < nb; ++b)
      ld.counts[b] += ld.counts[b - static_cast<std::size_t>(q)];
  }
  return ld;
}

/// Microcanonical temperature from a centered finite difference of ln g over
/// +-window_bins around e. A flat window reports +infinity.
struct TemperatureEstimate {
  double temperature = 0.0;
  double step = 0.0;     // energy offset used on each side
  int window_bins = 0;
};

inline TemperatureEstimate microcanonical_temperature(const LevelDensity& ld, double e,
                                                      int window_bins = 5) {
  if (window_bins < 1) throw parameter_error("window_bins must be >= 1");
  const long long b = ld.bin_index(e);
  const long long lo = b - window_bins;
  const long long hi = b + window_bins;
  if (lo < 0 || hi >= static_cast<long long>(ld.bins()))
    throw parameter_error("temperature window extends outside the tabulated grid");
  for (long long k = lo; k <= hi; ++k) {
    if (ld.counts[static_cast<std::size_t>(k)] == 0)
      throw ill_conditioned_density_error("zero count inside temperature window");
    if (k > lo && ld.counts[static_cast<std::size_t>(k)] < ld.counts[static_cast<std::size_t>(k - 1)])
      throw ill_conditioned_density_error("non-monotone counts inside temperature window");
  }
  TemperatureEstimate est;
  est.window_bins = window_bins;
  est.step = static_cast<double>(window_bins) * ld.bin;
  const double dlng = log_big(ld.counts[static_cast<std::size_t>(hi)]) -
                      log_big(ld.counts[static_cast<std::size_t>(lo)]);
  est.temperature = dlng > 0.0 ? 2.0 * est.step / dlng : std::numeric_limits<double>::infinity();
  return est;
}

/// Mean occupancy 1/(e^{hbar w / kB T} - 1).
inline double bose_einstein_occupancy(double omega, double t, double hbar = 1.0,
                                      double kb = 1.0) {
  if (!(omega > 0.0)) throw parameter_error("omega must be > 0");
  if (!(t > 0.0)) throw parameter_error("temperature must be > 0");
  return 1.0 / std::expm1(hbar * omega / (kb * t));
}

/// Exact mean occupancy of one mode over all microstates in the window
/// [e_total, e_total + bin): the fold is rebuilt with the mode removed and
/// then summed over that mode's ladder.
inline double microcanonical_mode_occupancy(const ModeSpectrum& spec, double e_total,
                                            double bin, std::size_t mode) {
  spec.validate();
  if (mode >= spec.size()) throw parameter_error("mode index out of range");
  if (!(e_total >= 0.0)) throw parameter_error("e_total must be >= 0");
  const std::vector<long long> quanta = snap_to_grid(spec, bin);
  const long long target = static_cast<long long>(std::floor(e_total / bin + 1e-12));

  // Counts of all modes except `mode`, up to the target bin.
  const std::size_t nb = static_cast<std::size_t>(target) + 1;
  std::vector<BigInt> rest(nb, BigInt(0));
  rest[0] = 1;
  for (std::size_t i = 0; i < quanta.size(); ++i) {
    if (i == mode) continue;
    const std::size_t q = static_cast<std::size_t>(quanta[i]);
    for (std::size_t b = q; b < nb; ++b) rest[b] += rest[b - q];
  }

  const long long qm = quanta[mode];
  BigInt num = 0, den = 0;
  for (long long n = 0; n * qm <= target; ++n) {
    const BigInt& c = rest[static_cast<std::size_t>(target - n * qm)];
    num += n * c;
    den += c;
  }
  if (den == 0) throw empty_ensemble_error("no microstates in the requested energy window");
  return big_ratio(num, den);
}

}  // namespace thermalize
