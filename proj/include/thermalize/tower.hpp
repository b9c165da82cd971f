#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "thermalize/errors.hpp"
#include "thermalize/rng.hpp"
#include "thermalize/spectrum.hpp"

namespace thermalize {

/// Discrete set of photon modes sharing one vacuum permeability.
struct PhotonModeSet {
  std::vector<double> frequencies;
  double mu0 = 1.0;

  void validate() const {
    if (frequencies.empty()) throw parameter_error("photon mode set must not be empty");
    for (double w : frequencies)
      if (!(w > 0.0)) throw parameter_error("photon frequencies must be > 0");
    if (!std::is_sorted(frequencies.begin(), frequencies.end()))
      throw parameter_error("photon frequencies must be ascending");
    if (!(mu0 > 0.0)) throw parameter_error("mu0 must be > 0");
  }

  std::size_t size() const { return frequencies.size(); }
};

/// Superposition of plane waves, one complex amplitude per referenced mode.
struct PlaneWaveField {
  std::vector<std::pair<std::size_t, std::complex<double>>> amplitudes;
};

/// Klein-Gordon norm of a plane-wave field: sum_a |alpha_a|^2 w_a / (2 mu0).
inline double kg_norm(const PlaneWaveField& f, const PhotonModeSet& modes) {
  modes.validate();
  double norm = 0.0;
  for (const auto& [idx, alpha] : f.amplitudes) {
    if (idx >= modes.size()) throw parameter_error("plane-wave mode index out of range");
    if (!std::isfinite(alpha.real()) || !std::isfinite(alpha.imag()))
      throw parameter_error("plane-wave amplitude must be finite");
    norm += std::norm(alpha) * modes.frequencies[idx] / (2.0 * modes.mu0);
  }
  return norm;
}

/// Amplitude giving unit KG norm: alpha = sqrt(2 mu0 / w). Low-frequency
/// photons are cheap: alpha grows without bound as w -> 0.
inline double unit_norm_amplitude(double omega, double mu0 = 1.0) {
  if (!(omega > 0.0)) throw parameter_error("omega must be > 0");
  if (!(mu0 > 0.0)) throw parameter_error("mu0 must be > 0");
  return std::sqrt(2.0 * mu0 / omega);
}

/// One fixed-photon-number sector: its norm share, the photon occupancy
/// vector (summing to the level index), and the matter energy in grid quanta.
struct TowerLevel {
  double norm_share = 0.0;
  std::vector<int> occupancy;
  long long matter_quanta = 0;
};

/// Matter-photon tower at fixed total energy. The matter sector enters only
/// through its level density; photon frequencies must be commensurate with
/// the density grid so all energy bookkeeping is exact in integer quanta.
class TowerState {
 public:
  TowerState(PhotonModeSet modes, std::shared_ptr<const LevelDensity> matter,
             std::vector<TowerLevel> levels, std::size_t current)
      : modes_(std::move(modes)), matter_(std::move(matter)), levels_(std::move(levels)),
        current_(current) {
    modes_.validate();
    if (!matter_) throw parameter_error("tower requires a matter level density");
    mode_quanta_.resize(modes_.size());
    for (std::size_t a = 0; a < modes_.size(); ++a) {
      const double q = modes_.frequencies[a] / matter_->bin;
      mode_quanta_[a] = std::llround(q);
      if (mode_quanta_[a] < 1 || std::abs(q - static_cast<double>(mode_quanta_[a])) > 1e-9 * q)
        throw parameter_error("photon frequency not commensurate with the matter energy grid");
    }
    if (levels_.empty()) throw parameter_error("tower must contain at least one level");
    if (current_ >= levels_.size()) throw parameter_error("current level out of range");
    double wsum = 0.0;
    for (std::size_t k = 0; k < levels_.size(); ++k) {
      const TowerLevel& lvl = levels_[k];
      if (lvl.norm_share < 0.0) throw parameter_error("norm shares must be >= 0");
      wsum += lvl.norm_share;
      if (lvl.occupancy.size() != modes_.size())
        throw parameter_error("occupancy vector length must match mode count");
      long long total = 0;
      for (int n : lvl.occupancy) {
        if (n < 0) throw parameter_error("occupancies must be >= 0");
        total += n;
      }
      if (total != static_cast<long long>(k))
        throw parameter_error("level k must hold exactly k photons");
      if (lvl.matter_quanta < 0 ||
          lvl.matter_quanta >= static_cast<long long>(matter_->bins()))
        throw parameter_error("matter energy outside the tabulated level density");
    }
    if (std::abs(wsum - 1.0) > 1e-12)
      throw parameter_error("norm shares must sum to 1");
  }

  const PhotonModeSet& modes() const { return modes_; }
  const LevelDensity& matter() const { return *matter_; }
  const std::shared_ptr<const LevelDensity>& matter_ptr() const { return matter_; }
  const std::vector<TowerLevel>& levels() const { return levels_; }
  std::size_t current_level() const { return current_; }
  long long mode_quanta(std::size_t a) const { return mode_quanta_[a]; }

  const std::vector<int>& occupancy() const { return levels_[current_].occupancy; }
  long long matter_quanta() const { return levels_[current_].matter_quanta; }

  /// Photon energy of one level, in physical units.
  double photon_energy(std::size_t k) const {
    double e = 0.0;
    for (std::size_t a = 0; a < modes_.size(); ++a)
      e += static_cast<double>(levels_[k].occupancy[a]) * modes_.frequencies[a];
    return e;
  }

  double level_energy(std::size_t k) const {
    return static_cast<double>(levels_[k].matter_quanta) * matter_->bin + photon_energy(k);
  }

  /// Total conserved energy in grid quanta (exact integer bookkeeping);
  /// meaningful when the norm sits on a single level.
  long long total_quanta() const {
    long long q = levels_[current_].matter_quanta;
    for (std::size_t a = 0; a < modes_.size(); ++a)
      q += static_cast<long long>(levels_[current_].occupancy[a]) * mode_quanta_[a];
    return q;
  }

 private:
  friend struct TowerStepper;
  PhotonModeSet modes_;
  std::shared_ptr<const LevelDensity> matter_;
  std::vector<long long> mode_quanta_;
  std::vector<TowerLevel> levels_;
  std::size_t current_;
};

/// Photon-free tower: the whole norm sits in the zero-photon level with all
/// energy in the matter sector.
inline TowerState make_tower(PhotonModeSet modes, std::shared_ptr<const LevelDensity> matter,
                             double e_total) {
  if (!matter) throw parameter_error("make_tower requires a matter level density");
  const double q = e_total / matter->bin;
  const long long quanta = std::llround(q);
  if (quanta < 0 || std::abs(q - static_cast<double>(quanta)) > 1e-9 * std::max(1.0, q))
    throw parameter_error("e_total not commensurate with the matter energy grid");
  TowerLevel base;
  base.norm_share = 1.0;
  base.occupancy.assign(modes.frequencies.size(), 0);
  base.matter_quanta = quanta;
  return TowerState(std::move(modes), std::move(matter), {std::move(base)}, 0);
}

/// Norm sum, total energy, and per-occupied-level energies. Equality of the
/// per-level energies is a reported diagnostic, not a hard constraint.
struct TowerReport {
  double norm_sum = 0.0;
  double total_energy = 0.0;
  std::vector<double> per_level_energy;
};

inline TowerReport tower_invariants(const TowerState& t) {
  TowerReport r;
  for (std::size_t k = 0; k < t.levels().size(); ++k) {
    const double w = t.levels()[k].norm_share;
    r.norm_sum += w;
    r.total_energy += w * t.level_energy(k);
    if (w > 0.0) r.per_level_energy.push_back(t.level_energy(k));
  }
  return r;
}

/// Einstein-coefficient style weights against the matter density of states:
///   emit   = (n_a + 1) g_m(E_mat - hw_a)
///   absorb =  n_a      g_m(E_mat + hw_a)
/// Each emission moves one unit of photon-number norm and hw of energy, so
/// the flux ratio j_E / j_norm = hw holds event-wise.
struct TransitionWeights {
  double emit = 0.0;
  double absorb = 0.0;
};

inline TransitionWeights transition_weights(const TowerState& t, std::size_t mode) {
  if (mode >= t.modes().size()) throw parameter_error("mode index out of range");
  const long long e = t.matter_quanta();
  const long long q = t.mode_quanta(mode);
  const int n = t.occupancy()[mode];
  if (n > 0 && e + q >= static_cast<long long>(t.matter().bins()))
    throw boundary_error("absorption window extends beyond the tabulated matter spectrum");
  TransitionWeights w;
  if (e - q >= 0) {
    const double g_down = big_ratio(t.matter().counts[static_cast<std::size_t>(e - q)], BigInt(1));
    w.emit = static_cast<double>(n + 1) * g_down;
  }
  if (n > 0) {
    const double g_up = big_ratio(t.matter().counts[static_cast<std::size_t>(e + q)], BigInt(1));
    w.absorb = static_cast<double>(n) * g_up;
  }
  return w;
}

namespace detail {

/// Log-space weights used inside the Markov chain so that astronomically
/// large state counts never overflow; one global reference cancels out.
struct LogDensity {
  std::vector<double> lg;  // ln g per bin, -inf where empty
  double ref = 0.0;

  explicit LogDensity(const LevelDensity& ld) {
    lg.resize(ld.bins(), -std::numeric_limits<double>::infinity());
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < ld.bins(); ++b) {
      if (ld.counts[b] > 0) {
        lg[b] = log_big(ld.counts[b]);
        best = std::max(best, lg[b]);
      }
    }
    ref = best;
  }

  double weight(long long b) const {
    if (b < 0 || b >= static_cast<long long>(lg.size())) return 0.0;
    const double l = lg[static_cast<std::size_t>(b)];
    return std::isfinite(l) ? std::exp(l - ref) : 0.0;
  }
};

}  // namespace detail

/// One Gillespie trajectory: the occupancy vector after every jump, the
/// sojourn time spent in the state before that jump, and time-averaged
/// occupancies with batch-mean standard errors.
struct EquilibrateResult {
  TowerState state;
  std::vector<std::vector<int>> occupancy_series;
  std::vector<double> sojourn;
  std::vector<double> mean_occupancy;
  std::vector<double> stderr_occupancy;
  double total_time = 0.0;
  std::size_t steps_taken = 0;
  bool absorbed = false;  // no transition had positive rate
  std::uint64_t seed = 0;
};

struct TowerStepper {
  static void apply(TowerState& t, std::size_t mode, int delta) {
    TowerLevel lvl = t.levels_[t.current_];
    lvl.occupancy[mode] += delta;
    lvl.matter_quanta -= delta * t.mode_quanta_[mode];
    long long k = 0;
    for (int n : lvl.occupancy) k += n;
    t.levels_[t.current_].norm_share = 0.0;
    if (static_cast<std::size_t>(k) >= t.levels_.size()) {
      TowerLevel blank;
      blank.occupancy.assign(t.modes_.size(), 0);
      t.levels_.resize(static_cast<std::size_t>(k) + 1, blank);
    }
    lvl.norm_share = 1.0;
    t.levels_[static_cast<std::size_t>(k)] = std::move(lvl);
    t.current_ = static_cast<std::size_t>(k);
  }
};

/// Runs the detailed-balance chain for a fixed number of jumps. The whole
/// unit of norm rides the current level, so the norm sum and the total
/// energy in quanta are conserved exactly at every step. Absorbing states
/// (no positive rate) end the walk early and simply persist.
inline EquilibrateResult equilibrate(const TowerState& start, std::size_t steps,
                                     std::uint64_t seed) {
  if (steps < 1) throw parameter_error("steps must be >= 1");
  EquilibrateResult res{start, {}, {}, {}, {}, 0.0, 0, false, seed};
  TowerState& state = res.state;
  const std::size_t m = state.modes().size();
  detail::LogDensity logg(state.matter());
  Rng rng(seed);

  res.occupancy_series.reserve(steps);
  res.sojourn.reserve(steps);
  std::vector<double> weights(2 * m);
  std::vector<double> time_weighted(m, 0.0);

  for (std::size_t step = 0; step < steps; ++step) {
    const long long e = state.matter_quanta();
    double total = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
      const long long q = state.mode_quanta(a);
      const int n = state.occupancy()[a];
      if (n > 0 && e + q >= static_cast<long long>(state.matter().bins()))
        throw boundary_error("absorption window extends beyond the tabulated matter spectrum");
      weights[2 * a] = static_cast<double>(n + 1) * logg.weight(e - q);
      weights[2 * a + 1] = static_cast<double>(n) * logg.weight(e + q);
      total += weights[2 * a] + weights[2 * a + 1];
    }
    if (!(total > 0.0)) {
      res.absorbed = true;
      break;
    }
    const double dt = rng.exponential(total);
    for (std::size_t a = 0; a < m; ++a)
      time_weighted[a] += dt * static_cast<double>(state.occupancy()[a]);
    res.total_time += dt;
    res.sojourn.push_back(dt);

    const std::size_t choice = rng.pick(weights, total);
    const std::size_t mode = choice / 2;
    const int delta = (choice % 2 == 0) ? +1 : -1;
    TowerStepper::apply(state, mode, delta);
    res.occupancy_series.push_back(state.occupancy());
    ++res.steps_taken;
  }

  res.mean_occupancy.assign(m, 0.0);
  res.stderr_occupancy.assign(m, 0.0);
  if (res.absorbed && res.steps_taken == 0) {
    for (std::size_t a = 0; a < m; ++a)
      res.mean_occupancy[a] = static_cast<double>(state.occupancy()[a]);
    return res;
  }
  for (std::size_t a = 0; a < m; ++a) res.mean_occupancy[a] = time_weighted[a] / res.total_time;

  // Batch means over equal time slices for the standard error.
  const std::size_t batches = std::min<std::size_t>(64, std::max<std::size_t>(2, res.steps_taken / 16));
  const double slice = res.total_time / static_cast<double>(batches);
  std::vector<std::vector<double>> batch_mean(m, std::vector<double>(batches, 0.0));
  {
    double t_acc = 0.0;
    std::vector<int> occ = start.occupancy();
    // reconstruct occupancy before each sojourn from the series
    for (std::size_t s = 0; s < res.steps_taken; ++s) {
      double remaining = res.sojourn[s];
      while (remaining > 0.0) {
        std::size_t b = std::min(batches - 1, static_cast<std::size_t>(t_acc / slice));
        const double room = (static_cast<double>(b) + 1.0) * slice - t_acc;
        const double take = std::min(remaining, std::max(room, 0.0));
        const double used = take > 0.0 ? take : remaining;
        for (std::size_t a = 0; a < m; ++a)
          batch_mean[a][b] += used * static_cast<double>(occ[a]);
        t_acc += used;
        remaining -= used;
      }
      occ = res.occupancy_series[s];
    }
  }
  for (std::size_t a = 0; a < m; ++a) {
    double mean = 0.0;
    for (double& v : batch_mean[a]) {
      v /= slice;
      mean += v;
    }
    mean /= static_cast<double>(batches);
    double var = 0.0;
    for (double v : batch_mean[a]) var += (v - mean) * (v - mean);
    var /= static_cast<double>(batches - 1);
    res.stderr_occupancy[a] = std::sqrt(var / static_cast<double>(batches));
  }
  return res;
}

/// Exact stationary statistics of the chain: P({n}) proportional to
/// g_m(E_tot - sum_a n_a hw_a), enumerated over the truncated occupancy
/// space. Means are exact big-integer ratios.
struct StationaryResult {
  std::vector<double> mean_occupancy;
  double tail_mass = 0.0;  // probability with any n_a at the cap
  std::vector<std::pair<std::vector<int>, double>> distribution;
};

inline StationaryResult stationary_solve(const PhotonModeSet& modes, const LevelDensity& matter,
                                         double e_total, int n_cap) {
  modes.validate();
  if (n_cap < 1) throw parameter_error("n_cap must be >= 1");
  const double qd = e_total / matter.bin;
  const long long e_quanta = std::llround(qd);
  if (e_quanta < 0 || std::abs(qd - static_cast<double>(e_quanta)) > 1e-9 * std::max(1.0, qd))
    throw parameter_error("e_total not commensurate with the matter energy grid");
  if (e_quanta >= static_cast<long long>(matter.bins()))
    throw parameter_error("e_total outside the tabulated matter spectrum");

  const std::size_t m = modes.size();
  std::vector<long long> quanta(m);
  for (std::size_t a = 0; a < m; ++a) {
    const double q = modes.frequencies[a] / matter.bin;
    quanta[a] = std::llround(q);
    if (quanta[a] < 1 || std::abs(q - static_cast<double>(quanta[a])) > 1e-9 * q)
      throw parameter_error("photon frequency not commensurate with the matter energy grid");
  }

  BigInt z = 0, boundary = 0;
  std::vector<BigInt> num(m, BigInt(0));
  std::vector<int> occ(m, 0);
  std::vector<std::pair<std::vector<int>, BigInt>> states;

  auto recurse = [&](auto&& self, std::size_t a, long long used) -> void {
    if (a == m) {
      const BigInt& g = matter.counts[static_cast<std::size_t>(e_quanta - used)];
      if (g == 0) return;
      z += g;
      bool at_cap = false;
      for (std::size_t i = 0; i < m; ++i) {
        num[i] += g * occ[i];
        if (occ[i] == n_cap) at_cap = true;
      }
      if (at_cap) boundary += g;
      states.emplace_back(occ, g);
      return;
    }
    for (int n = 0; n <= n_cap && used + n * quanta[a] <= e_quanta; ++n) {
      occ[a] = n;
      self(self, a + 1, used + n * quanta[a]);
    }
    occ[a] = 0;
  };
  recurse(recurse, 0, 0);

  if (z == 0) throw empty_ensemble_error("no reachable states at this total energy");
  StationaryResult res;
  res.tail_mass = big_ratio(boundary, z);
  if (res.tail_mass >= 1e-9) {
    // Tail counts states sitting exactly at the cap; only an error when the
    // cap actually cuts off energetically allowed occupancies.
    bool cap_binds = false;
    for (std::size_t a = 0; a < m; ++a)
      if (static_cast<long long>(n_cap + 1) * quanta[a] <= e_quanta) cap_binds = true;
    if (cap_binds)
      throw truncation_error("occupancy truncation leaves tail mass above 1e-9");
    res.tail_mass = 0.0;
  }
  res.mean_occupancy.resize(m);
  for (std::size_t a = 0; a < m; ++a) res.mean_occupancy[a] = big_ratio(num[a], z);
  res.distribution.reserve(states.size());
  for (auto& [vec, g] : states) res.distribution.emplace_back(std::move(vec), big_ratio(g, z));
  return res;
}

/// Mean photon occupancy per mode in the exact stationary state.
inline std::vector<double> stationary_occupancy(const PhotonModeSet& modes,
                                                const LevelDensity& matter, double e_total,
                                                int n_cap) {
  return stationary_solve(modes, matter, e_total, n_cap).mean_occupancy;
}

}  // namespace thermalize
