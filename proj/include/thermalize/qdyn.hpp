#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "thermalize/errors.hpp"
#include "thermalize/lattice.hpp"

namespace thermalize {

/// First and second moments of one normal-mode coordinate pair (q, p) in
/// mass-weighted units, hbar = 1.
struct ModeMoments {
  double mean_q = 0.0;
  double mean_p = 0.0;
  double var_q = 0.0;
  double var_p = 0.0;
  double cov_qp = 0.0;
};

/// Many-body state that is a single Gaussian peak, stored as independent
/// per-mode Gaussians over a normal-mode basis. Covers displaced (coherent)
/// and squeezed oscillator states plus free zero modes; evolution is exact.
class GaussianState {
 public:
  GaussianState(std::shared_ptr<const NormalModeBasis> basis,
                std::vector<ModeMoments> modes, double time)
      : basis_(std::move(basis)), modes_(std::move(modes)), time_(time) {
    if (!basis_) throw parameter_error("GaussianState requires a basis");
    if (modes_.size() != basis_->size())
      throw parameter_error("mode moments must match basis size");
    for (const ModeMoments& m : modes_) {
      if (!(m.var_q > 0.0) || !(m.var_p > 0.0))
        throw parameter_error("variances must be > 0");
      // The determinant equals 1/4 up to rounding of the stored moments, so
      // the admissible slack scales with the product being cancelled.
      const double magnitude = m.var_q * m.var_p + m.cov_qp * m.cov_qp;
      if (m.var_q * m.var_p - m.cov_qp * m.cov_qp < 0.25 - 1e-12 * std::max(1.0, magnitude))
        throw parameter_error("uncertainty bound var_q*var_p - cov^2 >= 1/4 violated");
    }
  }

  const NormalModeBasis& basis() const { return *basis_; }
  const std::shared_ptr<const NormalModeBasis>& basis_ptr() const { return basis_; }
  const std::vector<ModeMoments>& modes() const { return modes_; }
  const ModeMoments& mode(std::size_t i) const {
    if (i >= modes_.size()) throw parameter_error("mode index out of range");
    return modes_[i];
  }
  double time() const { return time_; }
  std::size_t size() const { return modes_.size(); }

 private:
  std::shared_ptr<const NormalModeBasis> basis_;
  std::vector<ModeMoments> modes_;
  double time_;
};

/// Ground state of every bound mode; zero modes become minimum-uncertainty
/// packets of the given width. The width is required iff a zero mode exists.
inline GaussianState ground_state(std::shared_ptr<const NormalModeBasis> basis,
                                  std::optional<double> zero_mode_width = {}) {
  if (!basis) throw parameter_error("ground_state requires a basis");
  if (basis->zero_mode_count > 0) {
    if (!zero_mode_width)
      throw parameter_error("zero_mode_width required: basis has a zero mode");
    if (!(*zero_mode_width > 0.0))
      throw parameter_error("zero_mode_width must be > 0");
  }
  std::vector<ModeMoments> modes(basis->size());
  for (std::size_t i = 0; i < basis->size(); ++i) {
    const double w = basis->frequencies[i];
    if (w > 0.0) {
      modes[i].var_q = 1.0 / (2.0 * w);
      modes[i].var_p = 0.5 * w;
    } else {
      const double s = *zero_mode_width;
      modes[i].var_q = s * s;
      modes[i].var_p = 1.0 / (4.0 * s * s);
    }
  }
  return GaussianState(std::move(basis), std::move(modes), 0.0);
}

/// Adds classical velocities: mean_p_i += sum_j e_j^(i) sqrt(m_j) v_j.
/// Second moments are untouched.
inline GaussianState apply_boost(const GaussianState& s,
                                 std::span<const double> atom_velocities) {
  const NormalModeBasis& b = s.basis();
  if (atom_velocities.size() != b.masses.size())
    throw parameter_error("velocity list must match atom count");
  std::vector<ModeMoments> modes = s.modes();
  for (std::size_t i = 0; i < modes.size(); ++i) {
    double dp = 0.0;
    for (std::size_t j = 0; j < atom_velocities.size(); ++j)
      dp += b.mode_matrix(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) *
            std::sqrt(b.masses[j]) * atom_velocities[j];
    modes[i].mean_p += dp;
  }
  return GaussianState(s.basis_ptr(), std::move(modes), s.time());
}

/// Exact analytic evolution to time t. Bound modes rotate in phase space at
/// their frequency; zero modes follow the free-particle update.
inline GaussianState evolve_to(const GaussianState& s, double t) {
  const double dt = t - s.time();
  if (dt < 0.0) throw time_ordering_error("evolve_to target precedes state time");
  std::vector<ModeMoments> modes = s.modes();
  for (std::size_t i = 0; i < modes.size(); ++i) {
    ModeMoments& m = modes[i];
    const double w = s.basis().frequencies[i];
    if (w > 0.0) {
      const double c = std::cos(w * dt);
      const double sn = std::sin(w * dt);
      const double q = m.mean_q, p = m.mean_p;
      m.mean_q = c * q + (sn / w) * p;
      m.mean_p = -w * sn * q + c * p;
      const double vq = m.var_q, vp = m.var_p, cv = m.cov_qp;
      m.var_q = c * c * vq + 2.0 * c * (sn / w) * cv + (sn / w) * (sn / w) * vp;
      m.var_p = w * w * sn * sn * vq - 2.0 * w * sn * c * cv + c * c * vp;
      m.cov_qp = -w * sn * c * vq + (c * c - sn * sn) * cv + (sn * c / w) * vp;
    } else {
      m.mean_q += m.mean_p * dt;
      m.var_q += 2.0 * m.cov_qp * dt + m.var_p * dt * dt;
      m.cov_qp += m.var_p * dt;
    }
  }
  return GaussianState(s.basis_ptr(), std::move(modes), t);
}

/// sqrt(Var(x_j)): positional width of one atom. Cross-mode covariances are
/// zero by construction, so the mode variances add through the orthonormal
/// transform, scaled back from mass-weighted coordinates.
inline double atom_width(const GaussianState& s, std::size_t atom) {
  const NormalModeBasis& b = s.basis();
  if (atom >= b.masses.size()) throw parameter_error("atom index out of range");
  double var = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double e = b.mode_matrix(static_cast<Eigen::Index>(atom), static_cast<Eigen::Index>(i));
    var += e * e * s.mode(i).var_q;
  }
  return std::sqrt(var / b.masses[atom]);
}

/// Positional width of the center of mass, sqrt(Var(sum_j m_j x_j / M)).
inline double cm_width(const GaussianState& s) {
  const NormalModeBasis& b = s.basis();
  const double total = b.total_mass();
  double var = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double proj = 0.0;
    for (std::size_t j = 0; j < b.masses.size(); ++j)
      proj += std::sqrt(b.masses[j]) *
              b.mode_matrix(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
    var += proj * proj * s.mode(i).var_q;
  }
  return std::sqrt(var) / total;
}

/// E_i = (p^2 + w^2 q^2)/2 + (var_p + w^2 var_q)/2. Zero modes reduce to the
/// kinetic terms.
inline double mode_energy(const GaussianState& s, std::size_t mode) {
  const ModeMoments& m = s.mode(mode);
  const double w = s.basis().frequencies[mode];
  return 0.5 * (m.mean_p * m.mean_p + w * w * m.mean_q * m.mean_q) +
         0.5 * (m.var_p + w * w * m.var_q);
}

inline double total_energy(const GaussianState& s) {
  double e = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) e += mode_energy(s, i);
  return e;
}

namespace detail {

/// Throws unless mode i is a bound coherent mode: var_q = 1/(2w) within a
/// relative 1e-9 and no q-p correlation beyond rounding.
inline double coherent_amplitude_sq_checked(const GaussianState& s, std::size_t i) {
  const double w = s.basis().frequencies[i];
  if (!(w > 0.0)) throw unsupported_state_error("mode has zero frequency");
  const ModeMoments& m = s.mode(i);
  if (std::abs(2.0 * w * m.var_q - 1.0) > 1e-9 || std::abs(m.cov_qp) > 1e-9)
    throw unsupported_state_error("mode is squeezed; occupancy analysis requires a coherent mode");
  return (m.mean_p * m.mean_p + w * w * m.mean_q * m.mean_q) / (2.0 * w);
}

}  // namespace detail

/// |alpha|^2 of a coherent bound mode.
inline double coherent_amplitude_sq(const GaussianState& s, std::size_t mode) {
  if (mode >= s.size()) throw parameter_error("mode index out of range");
  return detail::coherent_amplitude_sq_checked(s, mode);
}

/// Phonon-number distribution of one mode.
struct OccupancyDistribution {
  std::size_t mode = 0;
  std::vector<double> probabilities;  // P(0) ... P(n_max)
  double tail_mass = 0.0;
};

/// Poisson occupancy statistics P(n) = e^{-|a|^2} |a|^{2n} / n! of a coherent
/// mode; squeezed modes are rejected rather than approximated.
inline OccupancyDistribution mode_occupancy_distribution(const GaussianState& s,
                                                         std::size_t mode,
                                                         std::size_t n_max) {
  if (mode >= s.size()) throw parameter_error("mode index out of range");
  const double a2 = detail::coherent_amplitude_sq_checked(s, mode);
  OccupancyDistribution d;
  d.mode = mode;
  d.probabilities.resize(n_max + 1);
  double p = std::exp(-a2);
  double sum = 0.0;
  for (std::size_t n = 0; n <= n_max; ++n) {
    d.probabilities[n] = p;
    sum += p;
    p *= a2 / static_cast<double>(n + 1);
  }
  d.tail_mass = std::max(0.0, 1.0 - sum);
  return d;
}

/// Energy standard deviation over the eigenstate ladder: independent Poisson
/// mode variances add, so dE = sqrt(sum_i w_i^2 |a_i|^2). Zero modes carry no
/// ladder and are skipped.
inline double total_energy_spread(const GaussianState& s) {
  double var = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double w = s.basis().frequencies[i];
    if (!(w > 0.0)) continue;
    const double a2 = detail::coherent_amplitude_sq_checked(s, i);
    var += w * w * a2;
  }
  return std::sqrt(var);
}

/// The three recurrence diagnostics. Missing values mean the scan horizon
/// was exhausted without a crossing.
struct RecurrenceReport {
  std::optional<double> t_vib;
  std::optional<double> t_loc;
  std::optional<double> t_class;
  double epsilon = 0.0;
};

namespace detail {

/// Golden-section minimization of f over [lo, hi].
template <class F>
double golden_min(F&& f, double lo, double hi, double tol) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

/// First time in [0, t_max] where the sampled `value` crosses above
/// `threshold`, refined by bisection; nullopt when it never does.
template <class F>
std::optional<double> first_crossing(F&& value, double threshold, double step, double t_max) {
  if (value(0.0) > threshold) return 0.0;
  double prev_t = 0.0;
  for (double t = step; prev_t < t_max; t += step) {
    if (t > t_max) t = t_max;
    if (value(t) > threshold) {
      double lo = prev_t, hi = t;
      for (int k = 0; k < 60 && hi - lo > 1e-13 * std::max(1.0, hi); ++k) {
        const double mid = 0.5 * (lo + hi);
        (value(mid) > threshold ? hi : lo) = mid;
      }
      return 0.5 * (lo + hi);
    }
    prev_t = t;
    if (t >= t_max) break;
  }
  return std::nullopt;
}

}  // namespace detail

/// Scans for the three Poincare-like time scales, all reported as durations
/// measured from the state's current time:
///   t_vib   first time all excited-mode phases realign within phase_tol,
///           located as a dip of max_i |e^{i w_i t} - 1| (grid scan with
///           golden-section refinement of each candidate dip);
///   t_loc   first time any atomic width exceeds width_threshold;
///   t_class first time the CM width exceeds cm_threshold.
inline RecurrenceReport recurrence_times(const GaussianState& s, double phase_tol,
                                         double width_threshold, double cm_threshold,
                                         double t_max) {
  if (!(phase_tol > 0.0 && phase_tol < 1.0))
    throw parameter_error("phase_tol must be in (0, 1)");
  if (!(width_threshold > 0.0) || !(cm_threshold > 0.0))
    throw parameter_error("thresholds must be > 0");
  if (!(t_max > 0.0)) throw parameter_error("t_max must be > 0");

  RecurrenceReport report;
  report.epsilon = phase_tol;

  // Modes participating in the vibrational recurrence.
  std::vector<double> excited;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double w = s.basis().frequencies[i];
    if (!(w > 0.0)) continue;
    const ModeMoments& m = s.mode(i);
    const double a2 = (m.mean_p * m.mean_p + w * w * m.mean_q * m.mean_q) / (2.0 * w);
    if (a2 > 1e-9) excited.push_back(w);
  }

  const double w_max = s.basis().max_frequency();
  if (excited.empty()) {
    report.t_vib = 0.0;  // nothing to realign
  } else if (w_max > 0.0) {
    auto phase_miss = [&](double t) {
      double worst = 0.0;
      for (double w : excited) worst = std::max(worst, 2.0 * std::abs(std::sin(0.5 * w * t)));
      return worst;
    };
    const double step = 2.0 * M_PI / (64.0 * w_max);
    double f_prev2 = phase_miss(0.0), f_prev1 = phase_miss(step);
    bool armed = false;  // skip the trivial alignment at t = 0
    for (double t = 2.0 * step; t <= t_max; t += step) {
      const double f = phase_miss(t);
      if (!armed && f_prev1 >= phase_tol) armed = true;
      if (armed && f_prev1 <= f_prev2 && f_prev1 <= f) {
        const double t_star =
            detail::golden_min(phase_miss, t - 2.0 * step, t, 1e-12 * std::max(1.0, t));
        if (phase_miss(t_star) < phase_tol) {
          report.t_vib = t_star;
          break;
        }
      }
      f_prev2 = f_prev1;
      f_prev1 = f;
    }
  }

  // Width crossings, measured as offsets from the state's current time.
  // Bound-mode contributions are periodic; growth comes from zero-mode
  // spreading, so the same grid resolves both.
  const double width_step =
      w_max > 0.0 ? 2.0 * M_PI / (64.0 * w_max) : t_max / 4096.0;
  auto max_width = [&](double dt) {
    const GaussianState st = evolve_to(s, s.time() + dt);
    double worst = 0.0;
    for (std::size_t j = 0; j < s.basis().masses.size(); ++j)
      worst = std::max(worst, atom_width(st, j));
    return worst;
  };
  auto cm = [&](double dt) { return cm_width(evolve_to(s, s.time() + dt)); };
  report.t_loc = detail::first_crossing(max_width, width_threshold, width_step, t_max);
  report.t_class = detail::first_crossing(cm, cm_threshold, width_step, t_max);
  return report;
}

inline nlohmann::ordered_json recurrence_to_json(const RecurrenceReport& r) {
  nlohmann::ordered_json j;
  j["t_vib"] = r.t_vib ? nlohmann::ordered_json(*r.t_vib) : nlohmann::ordered_json(nullptr);
  j["t_loc"] = r.t_loc ? nlohmann::ordered_json(*r.t_loc) : nlohmann::ordered_json(nullptr);
  j["t_class"] = r.t_class ? nlohmann::ordered_json(*r.t_class) : nlohmann::ordered_json(nullptr);
  j["epsilon"] = r.epsilon;
  return j;
}

}  // namespace thermalize
