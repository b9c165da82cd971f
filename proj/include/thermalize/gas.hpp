#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "thermalize/errors.hpp"
#include "thermalize/rng.hpp"

namespace thermalize {

/// Maxwell-Boltzmann velocity sample: i.i.d. normal, mean 0, variance kT/m.
inline std::vector<double> sample_maxwell_boltzmann(std::size_t n, double mass,
                                                    double temperature, std::uint64_t seed) {
  if (n < 1) throw parameter_error("n must be >= 1");
  if (!(mass > 0.0)) throw parameter_error("mass must be > 0");
  if (!(temperature > 0.0)) throw parameter_error("temperature must be > 0");
  Rng rng(seed);
  const double sigma = std::sqrt(temperature / mass);
  std::vector<double> v(n);
  for (double& vi : v) vi = sigma * rng.normal();
  return v;
}

/// Single-packet energy spread hbar^2 / (2 m d^2) for a parcel of width d.
inline double packet_energy_spread(double mass, double width, double hbar = 1.0) {
  if (!(mass > 0.0)) throw parameter_error("mass must be > 0");
  if (!(width > 0.0)) throw parameter_error("width must be > 0");
  return hbar * hbar / (2.0 * mass * width * width);
}

/// Gas of localized wavepackets in a 1D box with reflecting walls. Contact
/// is a soft-sphere spring: V = kappa/2 (2 r_c - dx)^2 while |dx| < 2 r_c.
/// Masses are per particle so a small dispersion can restore velocity mixing
/// (equal masses in 1D only exchange velocities).
struct PacketGas {
  std::vector<double> positions;
  std::vector<double> velocities;
  std::vector<double> masses;
  std::vector<double> packet_widths;  // initial sigma per particle
  double kappa = 1.0;
  double contact_radius = 0.1;
  double box_length = 1.0;
  double temperature = 1.0;
  // 0 = instantaneous elastic reflection. A positive value turns each wall
  // into a one-sided spring acting on the particle shell; required when a
  // compressed chain presses against the walls permanently, where impulsive
  // reflection under sustained load pumps energy.
  double wall_stiffness = 0.0;

  std::size_t size() const { return positions.size(); }

  void validate() const {
    const std::size_t n = positions.size();
    if (n == 0) throw parameter_error("gas must contain at least one particle");
    if (velocities.size() != n || masses.size() != n || packet_widths.size() != n)
      throw parameter_error("per-particle arrays must have equal length");
    for (double m : masses)
      if (!(m > 0.0)) throw parameter_error("masses must be > 0");
    for (double s : packet_widths)
      if (!(s > 0.0)) throw parameter_error("packet widths must be > 0");
    if (!(kappa > 0.0)) throw parameter_error("kappa must be > 0");
    if (!(contact_radius > 0.0)) throw parameter_error("contact radius must be > 0");
    if (!(box_length > 0.0)) throw parameter_error("box length must be > 0");
    if (!(2.0 * contact_radius < box_length))
      throw parameter_error("contact diameter must fit inside the box");
    if (wall_stiffness < 0.0) throw parameter_error("wall stiffness must be >= 0");
    for (double x : positions)
      if (x < 0.0 || x > box_length) throw parameter_error("positions must lie inside the box");
  }

  /// Gas-like configuration check: contacts are rare events only when the
  /// contact diameter is below the mean spacing. The dense solid limit
  /// deliberately violates this, so it is not part of validate().
  bool is_dilute() const {
    return 2.0 * contact_radius < box_length / static_cast<double>(size());
  }

  double min_mass() const { return *std::min_element(masses.begin(), masses.end()); }
};

/// Evenly spaced gas with MB velocities and a deterministic +-dispersion
/// mass pattern (alternating signs keeps the draw seed-independent).
inline PacketGas make_packet_gas(std::size_t n, double mass, double mass_dispersion,
                                 double temperature, double kappa, double contact_radius,
                                 double box_length, double sigma0, std::uint64_t seed) {
  if (mass_dispersion < 0.0 || mass_dispersion >= 1.0)
    throw parameter_error("mass dispersion must be in [0, 1)");
  PacketGas g;
  g.kappa = kappa;
  g.contact_radius = contact_radius;
  g.box_length = box_length;
  g.temperature = temperature;
  g.positions.resize(n);
  g.masses.resize(n);
  g.packet_widths.assign(n, sigma0);
  const double spacing = box_length / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.positions[i] = spacing * (static_cast<double>(i) + 0.5);
    g.masses[i] = mass * (1.0 + (i % 2 == 0 ? mass_dispersion : -mass_dispersion));
  }
  Rng rng(seed);
  g.velocities.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    g.velocities[i] = std::sqrt(temperature / g.masses[i]) * rng.normal();
  g.validate();
  if (!g.is_dilute())
    throw parameter_error("contact diameter must be below the mean spacing");
  return g;
}

/// Sampled MD record plus the collision bookkeeping the partition analysis
/// needs. Packet widths follow the free-spreading law between contacts and
/// reset on contact; they do not feed back into the classical forces.
struct GasTrajectory {
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> sample_times;
  std::vector<std::vector<double>> x, v, ke, pe, sigma;  // [sample][particle]
  std::vector<double> masses;
  std::vector<double> contact_durations;          // completed pair contacts
  std::vector<std::vector<double>> collision_times;  // per particle, contact starts
  std::vector<std::size_t> collision_counts;
  // Pairs crossing the full-overlap cusp at dx = 0. The potential kink there
  // is not resolved by the integrator, so a run is trustworthy only when
  // this stays zero; keep kT well below the barrier kappa/2 (2 r_c)^2.
  std::size_t pass_through_events = 0;
  double energy_initial = 0.0;
  double energy_final = 0.0;
  double max_energy_drift = 0.0;  // relative
  double box_length = 0.0;
  double contact_radius = 0.0;
};

/// Velocity-Verlet integration with reflecting walls. The time step must
/// resolve the stiff contact oscillation: dt < (1/20) pi sqrt(m_min/(2 kappa)).
inline GasTrajectory simulate_gas(const PacketGas& gas, double t_end, double dt,
                                  std::uint64_t seed, std::size_t sample_stride = 1) {
  gas.validate();
  if (!(t_end > 0.0)) throw parameter_error("t_end must be > 0");
  const double stiffest = std::max(gas.kappa, gas.wall_stiffness);
  const double dt_max = 0.05 * M_PI * std::sqrt(gas.min_mass() / (2.0 * stiffest));
  if (!(dt > 0.0) || dt >= dt_max)
    throw stability_error("dt must be below (1/20) pi sqrt(m/(2 kappa)) = " +
                          std::to_string(dt_max));
  if (sample_stride < 1) sample_stride = 1;

  const std::size_t n = gas.size();
  const double r2 = 2.0 * gas.contact_radius;
  std::vector<double> x = gas.positions;
  std::vector<double> v = gas.velocities;
  std::vector<double> force(n), pe(n);

  auto compute_forces = [&]() {
    std::fill(force.begin(), force.end(), 0.0);
    std::fill(pe.begin(), pe.end(), 0.0);
    // Plain pair loop: fast particles can tunnel past each other through the
    // finite barrier, so index order need not match position order.
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = x[j] - x[i];
        if (std::abs(dx) >= r2) continue;
        const double overlap = r2 - std::abs(dx);
        const double f = gas.kappa * overlap;  // repulsive along dx sign
        const double dir = dx >= 0.0 ? 1.0 : -1.0;
        force[i] -= dir * f;
        force[j] += dir * f;
        const double u = 0.5 * gas.kappa * overlap * overlap;
        pe[i] += 0.5 * u;
        pe[j] += 0.5 * u;
      }
    }
    if (gas.wall_stiffness > 0.0) {
      for (std::size_t i = 0; i < n; ++i) {
        const double left = gas.contact_radius - x[i];
        if (left > 0.0) {
          force[i] += gas.wall_stiffness * left;
          pe[i] += 0.5 * gas.wall_stiffness * left * left;
        }
        const double right = x[i] - (gas.box_length - gas.contact_radius);
        if (right > 0.0) {
          force[i] -= gas.wall_stiffness * right;
          pe[i] += 0.5 * gas.wall_stiffness * right * right;
        }
      }
    }
  };

  auto total_energy = [&]() {
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      e += 0.5 * gas.masses[i] * v[i] * v[i] + pe[i];
    return e;
  };

  GasTrajectory traj;
  traj.dt = dt;
  traj.seed = seed;
  traj.masses = gas.masses;
  traj.box_length = gas.box_length;
  traj.contact_radius = gas.contact_radius;
  traj.collision_times.resize(n);
  traj.collision_counts.assign(n, 0);

  // Pair overlap state for contact bookkeeping.
  std::vector<std::vector<char>> overlapping(n, std::vector<char>(n, 0));
  std::vector<std::vector<double>> contact_start(n, std::vector<double>(n, 0.0));
  std::vector<std::vector<double>> last_dx(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i + 1 < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) last_dx[i][j] = x[j] - x[i];
  std::vector<double> last_contact(n, 0.0);  // for packet spreading resets
  std::vector<char> in_any_contact(n, 0);

  const std::size_t steps = static_cast<std::size_t>(std::ceil(t_end / dt));
  compute_forces();
  traj.energy_initial = total_energy();

  auto record = [&](double t) {
    traj.sample_times.push_back(t);
    traj.x.push_back(x);
    traj.v.push_back(v);
    std::vector<double> ke(n), sg(n);
    for (std::size_t i = 0; i < n; ++i) {
      ke[i] = 0.5 * gas.masses[i] * v[i] * v[i];
      const double s0 = gas.packet_widths[i];
      const double tau = t - last_contact[i];
      sg[i] = std::sqrt(s0 * s0 + (tau / (2.0 * gas.masses[i] * s0)) *
                                      (tau / (2.0 * gas.masses[i] * s0)));
    }
    traj.ke.push_back(std::move(ke));
    traj.pe.push_back(pe);
    traj.sigma.push_back(std::move(sg));
  };
  record(0.0);

  double t = 0.0;
  for (std::size_t step = 0; step < steps; ++step) {
    for (std::size_t i = 0; i < n; ++i) {
      const double a = force[i] / gas.masses[i];
      x[i] += v[i] * dt + 0.5 * a * dt * dt;
      v[i] += 0.5 * a * dt;
    }
    // Reflecting walls: fold position, flip velocity.
    for (std::size_t i = 0; i < n; ++i) {
      while (x[i] < 0.0 || x[i] > gas.box_length) {
        if (x[i] < 0.0) x[i] = -x[i];
        if (x[i] > gas.box_length) x[i] = 2.0 * gas.box_length - x[i];
        v[i] = -v[i];
      }
    }
    compute_forces();
    for (std::size_t i = 0; i < n; ++i) v[i] += 0.5 * (force[i] / gas.masses[i]) * dt;
    t = static_cast<double>(step + 1) * dt;

    // Contact transitions at step resolution.
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx_now = x[j] - x[i];
        if (overlapping[i][j] && dx_now * last_dx[i][j] < 0.0) ++traj.pass_through_events;
        last_dx[i][j] = dx_now;
        const bool now = std::abs(dx_now) < r2;
        if (now && !overlapping[i][j]) {
          overlapping[i][j] = 1;
          contact_start[i][j] = t;
          traj.collision_times[i].push_back(t);
          traj.collision_times[j].push_back(t);
          ++traj.collision_counts[i];
          ++traj.collision_counts[j];
          last_contact[i] = t;
          last_contact[j] = t;
        } else if (!now && overlapping[i][j]) {
          overlapping[i][j] = 0;
          traj.contact_durations.push_back(t - contact_start[i][j]);
          last_contact[i] = t;
          last_contact[j] = t;
        }
      }
    }

    if ((step + 1) % sample_stride == 0) record(t);
    const double e = total_energy();
    traj.max_energy_drift = std::max(
        traj.max_energy_drift,
        std::abs(e - traj.energy_initial) / std::max(std::abs(traj.energy_initial), 1e-300));
  }
  traj.energy_final = total_energy();
  return traj;
}

/// Time-averaged per-particle kinetic and potential energy densities plus
/// the recoil and collision time scales measured from the same trajectory.
struct PartitionHistograms {
  std::vector<double> energy_grid;  // left bin edges
  double bin_width = 0.0;
  std::vector<double> h_ke, h_pe;  // normalized densities
  double tau_r = 0.0;
  double tau_coll = 0.0;
  double pe_positive_fraction = 0.0;
  double mean_ke = 0.0;
  double mean_pe = 0.0;
  double kt_measured = 0.0;
  double a_fit = 0.0;
  double gamma_fit = 0.0;
  double width_fit = 0.0;
  double fit_residual = 0.0;
  double ks_stat = 0.0;
};

namespace detail {

/// Kolmogorov-Smirnov distance of samples against the standard normal CDF.
inline double ks_normal(std::vector<double> z) {
  std::sort(z.begin(), z.end());
  const double n = static_cast<double>(z.size());
  double d = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-z[i] / std::sqrt(2.0));
    d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
    d = std::max(d, std::abs(cdf - static_cast<double>(i + 1) / n));
  }
  return d;
}

/// Least-squares fit of A exp(-(c - E)^2 / (2 s^2)) to a histogram by
/// moment initialization and damped Gauss-Newton refinement.
struct GaussFit {
  double a = 0.0, c = 0.0, s = 0.0, residual = 0.0;
};

inline GaussFit fit_gaussian(const std::vector<double>& centers, const std::vector<double>& h) {
  GaussFit fit;
  double mass = 0.0, mean = 0.0;
  double peak = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    mass += h[i];
    mean += centers[i] * h[i];
    peak = std::max(peak, h[i]);
  }
  if (mass <= 0.0 || peak <= 0.0) return fit;
  mean /= mass;
  double var = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i)
    var += (centers[i] - mean) * (centers[i] - mean) * h[i];
  var /= mass;
  fit.a = peak;
  fit.c = mean;
  fit.s = std::sqrt(std::max(var, 1e-12));

  auto model = [&](double e) {
    const double zt = (fit.c - e) / fit.s;
    return fit.a * std::exp(-0.5 * zt * zt);
  };
  for (int iter = 0; iter < 200; ++iter) {
    double jtj[3][3] = {{0}}, jtr[3] = {0};
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double e = centers[i];
      const double f = model(e);
      const double r = h[i] - f;
      const double zt = (fit.c - e) / fit.s;
      const double j0 = f / fit.a;
      const double j1 = -f * zt / fit.s;
      const double j2 = f * zt * zt / fit.s;
      const double jac[3] = {j0, j1, j2};
      for (int p = 0; p < 3; ++p) {
        jtr[p] += jac[p] * r;
        for (int q = 0; q < 3; ++q) jtj[p][q] += jac[p] * jac[q];
      }
    }
    for (int p = 0; p < 3; ++p) jtj[p][p] *= 1.0 + 1e-3;
    // Solve the 3x3 system by Cramer's rule.
    auto det3 = [](const double m[3][3]) {
      return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
             m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
             m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    };
    const double d = det3(jtj);
    if (std::abs(d) < 1e-30) break;
    double delta[3];
    for (int p = 0; p < 3; ++p) {
      double mod[3][3];
      for (int r = 0; r < 3; ++r)
        for (int c2 = 0; c2 < 3; ++c2) mod[r][c2] = jtj[r][c2];
      for (int r = 0; r < 3; ++r) mod[r][p] = jtr[r];
      delta[p] = det3(mod) / d;
    }
    fit.a += delta[0];
    fit.c += delta[1];
    fit.s += delta[2];
    fit.a = std::max(fit.a, 1e-12);
    fit.s = std::max(fit.s, 1e-9);
    if (std::abs(delta[0]) + std::abs(delta[1]) + std::abs(delta[2]) < 1e-12) break;
  }
  double ss = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double r = h[i] - model(centers[i]);
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / static_cast<double>(h.size())) / peak;
  return fit;
}

}  // namespace detail

inline PartitionHistograms energy_partition_histograms(const GasTrajectory& traj,
                                                       std::size_t bins) {
  if (bins < 2) throw parameter_error("bins must be >= 2");
  std::size_t total_collisions = 0;
  for (std::size_t c : traj.collision_counts) total_collisions += c;
  total_collisions /= 2;  // each contact increments two particles
  if (total_collisions < 100)
    throw insufficient_statistics_error("need at least 100 collisions, have " +
                                        std::to_string(total_collisions));
  if (traj.sample_times.size() < 2)
    throw insufficient_statistics_error("trajectory holds fewer than two samples");

  const std::size_t n = traj.masses.size();
  PartitionHistograms out;

  double e_max = 0.0;
  for (std::size_t s = 0; s < traj.sample_times.size(); ++s)
    for (std::size_t i = 0; i < n; ++i)
      e_max = std::max({e_max, traj.ke[s][i], traj.pe[s][i]});
  if (!(e_max > 0.0)) throw insufficient_statistics_error("trajectory carries no energy");
  out.bin_width = e_max / static_cast<double>(bins) * (1.0 + 1e-12);
  out.energy_grid.resize(bins);
  for (std::size_t b = 0; b < bins; ++b)
    out.energy_grid[b] = out.bin_width * static_cast<double>(b);
  out.h_ke.assign(bins, 0.0);
  out.h_pe.assign(bins, 0.0);

  std::size_t count = 0, pe_positive = 0;
  double ke_sum = 0.0, pe_sum = 0.0, mv2_sum = 0.0;
  for (std::size_t s = 0; s < traj.sample_times.size(); ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      const double ke = traj.ke[s][i];
      const double pe = traj.pe[s][i];
      ++out.h_ke[std::min(bins - 1, static_cast<std::size_t>(ke / out.bin_width))];
      ++out.h_pe[std::min(bins - 1, static_cast<std::size_t>(pe / out.bin_width))];
      ke_sum += ke;
      pe_sum += pe;
      mv2_sum += traj.masses[i] * traj.v[s][i] * traj.v[s][i];
      if (pe > 0.0) ++pe_positive;
      ++count;
    }
  }
  const double norm = 1.0 / (static_cast<double>(count) * out.bin_width);
  for (std::size_t b = 0; b < bins; ++b) {
    out.h_ke[b] *= norm;
    out.h_pe[b] *= norm;
  }
  out.mean_ke = ke_sum / static_cast<double>(count);
  out.mean_pe = pe_sum / static_cast<double>(count);
  out.pe_positive_fraction = static_cast<double>(pe_positive) / static_cast<double>(count);
  out.kt_measured = mv2_sum / static_cast<double>(count);

  if (!traj.contact_durations.empty()) {
    out.tau_r = std::accumulate(traj.contact_durations.begin(), traj.contact_durations.end(), 0.0) /
                static_cast<double>(traj.contact_durations.size());
  }
  double gap_sum = 0.0;
  std::size_t gap_count = 0;
  for (const auto& times : traj.collision_times) {
    for (std::size_t k = 1; k < times.size(); ++k) {
      gap_sum += times[k] - times[k - 1];
      ++gap_count;
    }
  }
  if (gap_count > 0) out.tau_coll = gap_sum / static_cast<double>(gap_count);

  std::vector<double> centers(bins);
  for (std::size_t b = 0; b < bins; ++b)
    centers[b] = out.energy_grid[b] + 0.5 * out.bin_width;
  const detail::GaussFit fit = detail::fit_gaussian(centers, out.h_ke);
  out.a_fit = fit.a;
  out.width_fit = fit.s;
  out.fit_residual = fit.residual;
  out.gamma_fit = out.kt_measured > 0.0 ? fit.c / out.kt_measured : 0.0;

  std::vector<double> z;
  z.reserve(count);
  for (std::size_t s = 0; s < traj.sample_times.size(); ++s)
    for (std::size_t i = 0; i < n; ++i)
      z.push_back(traj.v[s][i] * std::sqrt(traj.masses[i] / out.kt_measured));
  out.ks_stat = detail::ks_normal(std::move(z));
  return out;
}

}  // namespace thermalize
