// Acceptance suite: one check per numbered criterion, each printing a single
// PASS/FAIL line with the measured numbers. Exit code 0 iff every requested
// criterion passes.
//
// Criteria 3, 6, and 8 encode physics targets that are not attainable at
// their pinned parameters (see the failure diagnostics they print); they are
// implemented faithfully and left red rather than loosened.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "thermalize/experiment.hpp"
#include "thermalize/gas.hpp"
#include "thermalize/lattice.hpp"
#include "thermalize/qdyn.hpp"
#include "thermalize/rng.hpp"
#include "thermalize/spectrum.hpp"
#include "thermalize/tower.hpp"

using namespace thermalize;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// 1. Fixed-end dispersion relation, N = 1..256, rel error < 1e-10.

Outcome criterion_1() {
  const double kappa = 1.0, mass = 1.0;
  double worst = 0.0;
  for (std::size_t n = 1; n <= 256; ++n) {
    const NormalModeBasis b =
        normal_modes(build_chain(n, mass, kappa, 1.0, Boundary::fixed_ends));
    for (std::size_t k = 1; k <= n; ++k) {
      const double expected = 2.0 * std::sqrt(kappa / mass) *
                              std::sin(static_cast<double>(k) * M_PI /
                                       (2.0 * static_cast<double>(n + 1)));
      worst = std::max(worst, std::abs(b.frequencies[k - 1] - expected) / expected);
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "max rel error %.3e (bound 1e-10) over N=1..256", worst);
  return {worst < 1e-10, buf};
}

// ---------------------------------------------------------------------------
// 2. Collision bookkeeping: internal energy = mu/2 (v1-v2)^2, 20 random draws.

Outcome criterion_2() {
  Rng rng(20250809);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t na = 1 + static_cast<std::size_t>(rng.uniform01() * 10);
    const std::size_t nb = 1 + static_cast<std::size_t>(rng.uniform01() * 10);
    const double ma = 0.5 + 2.0 * rng.uniform01();
    const double mb = 0.5 + 2.0 * rng.uniform01();
    const double ka = 0.5 + 2.0 * rng.uniform01();
    const double kb = 0.5 + 2.0 * rng.uniform01();
    const double kj = 0.5 + 2.0 * rng.uniform01();
    const double va = 2.0 * rng.uniform01() - 1.0;
    const double vb = 2.0 * rng.uniform01() - 1.0;

    const Lattice a = build_chain(na, ma, ka, 1.0, Boundary::free_ends);
    const Lattice b = build_chain(nb, mb, kb, 1.0, Boundary::free_ends);
    const Lattice fused = merge_lattices(a, b, kj);
    const auto basis = std::make_shared<const NormalModeBasis>(normal_modes(fused));

    std::vector<double> v(na + nb, va);
    for (std::size_t j = na; j < na + nb; ++j) v[j] = vb;
    const GaussianState s = apply_boost(ground_state(basis, 1.0), v);

    double internal = 0.0;
    for (std::size_t i = 0; i < basis->size(); ++i) {
      const double w = basis->frequencies[i];
      if (w > 0.0) internal += mode_energy(s, i) - 0.5 * w;
    }
    const double m1 = a.total_mass(), m2 = b.total_mass();
    const double expected = 0.5 * (m1 * m2 / (m1 + m2)) * (va - vb) * (va - vb);
    if (expected > 0.0) worst = std::max(worst, std::abs(internal - expected) / expected);
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "max rel error %.3e (bound 1e-9) over 20 draws", worst);
  return {worst < 1e-9, buf};
}

// ---------------------------------------------------------------------------
// 3. Localization persistence on the fused 32-atom chain.

Outcome criterion_3() {
  const Lattice block = build_chain(16, 1.0, 1.0, 1.0, Boundary::free_ends);
  const Lattice fused = merge_lattices(block, block, 1.0);
  const auto basis = std::make_shared<const NormalModeBasis>(normal_modes(fused));
  const double w_max = basis->max_frequency();
  const double w_min = basis->min_bound_frequency();
  const std::size_t n = fused.size();

  // Relative velocity set so the injected internal energy is 0.1 w_max per atom.
  const double mu = 16.0 * 16.0 / 32.0;
  const double dv = std::sqrt(2.0 * (static_cast<double>(n) * 0.1 * w_max) / mu);
  std::vector<double> v(n, 0.5 * dv);
  for (std::size_t j = 16; j < n; ++j) v[j] = -0.5 * dv;

  const double sigma0 = 1.0;  // mass-weighted CM packet width
  const GaussianState start = apply_boost(ground_state(basis, sigma0), v);

  const double horizon = 100.0 * (2.0 * M_PI / w_min);
  const std::size_t samples = 2001;
  double max_width = 0.0, max_internal = 0.0, worst_cm = 0.0;
  const double total_mass = 32.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const double t = horizon * static_cast<double>(s) / static_cast<double>(samples - 1);
    const GaussianState st = evolve_to(start, t);
    for (std::size_t j = 0; j < n; ++j) {
      max_width = std::max(max_width, atom_width(st, j));
      double var_int = 0.0;
      for (std::size_t i = 0; i < st.size(); ++i) {
        if (!(basis->frequencies[i] > 0.0)) continue;
        const double e = basis->mode_matrix(static_cast<Eigen::Index>(j),
                                            static_cast<Eigen::Index>(i));
        var_int += e * e * st.mode(i).var_q;
      }
      max_internal = std::max(max_internal, std::sqrt(var_int));
    }
    const double expected_cm =
        std::sqrt((sigma0 * sigma0 + (t / (2.0 * sigma0)) * (t / (2.0 * sigma0))) /
                  total_mass);
    worst_cm = std::max(worst_cm, std::abs(cm_width(st) - expected_cm) / expected_cm);
  }

  const bool widths_ok = max_width < 0.5;
  const bool cm_ok = worst_cm < 1e-9;
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "max atomic width %.4f vs bound d/2 = 0.5 over 100 slow periods "
                "(internal-mode part alone: %.4f, already above the bound in the ground "
                "state at kappa = m = d = hbar = 1); CM free-spreading law error %.2e "
                "(bound 1e-9, %s)",
                max_width, max_internal, worst_cm, cm_ok ? "ok" : "violated");
  return {widths_ok && cm_ok, buf};
}

// ---------------------------------------------------------------------------
// 4. Coherent-state occupancies vs quadrature overlaps, 1e-8 absolute.

Outcome criterion_4() {
  const auto basis = std::make_shared<const NormalModeBasis>(
      normal_modes(build_chain(1, 1.0, 0.5, 1.0, Boundary::fixed_ends)));  // omega = 1
  double worst = 0.0;
  for (double a2 : {0.3, 1.0, 2.3}) {
    const double qbar = std::sqrt(2.0 * a2);
    std::vector<ModeMoments> m = ground_state(basis).modes();
    m[0].mean_q = qbar;
    const GaussianState s(basis, std::move(m), 0.0);
    const OccupancyDistribution d = mode_occupancy_distribution(s, 0, 10);
    const std::vector<double> expected = oracle::coherent_overlap_sq(1.0, qbar, 10);
    for (std::size_t k = 0; k <= 10; ++k)
      worst = std::max(worst, std::abs(d.probabilities[k] - expected[k]));
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "max abs deviation %.3e (bound 1e-8) for |alpha|^2 in {0.3, 1, 2.3}, n <= 10",
                worst);
  return {worst < 1e-8, buf};
}

// ---------------------------------------------------------------------------
// 5. DP level counts equal brute-force enumeration on 50+ random spectra.

Outcome criterion_5() {
  Rng rng(555);
  int spectra = 0;
  long long largest_space = 0;
  for (int trial = 0; trial < 55; ++trial) {
    const std::size_t n_modes = 1 + static_cast<std::size_t>(rng.uniform01() * 5.0);
    const double bin = 0.2 + 0.8 * rng.uniform01();
    ModeSpectrum spec;
    for (std::size_t i = 0; i < n_modes; ++i)
      spec.frequencies.push_back(bin * (0.6 + 8.0 * rng.uniform01()));
    std::sort(spec.frequencies.begin(), spec.frequencies.end());
    const double e_max = bin * (4.0 + 24.0 * rng.uniform01());

    const LevelDensity ld = level_counts(spec, e_max, bin);
    oracle::BigInt total = 0;
    for (const BigInt& c : ld.counts) total += c;
    if (total > 10000) continue;  // stay inside the pledged state budget
    largest_space = std::max(largest_space, total.convert_to<long long>());

    const std::vector<oracle::BigInt> expected =
        oracle::enumerate_level_counts(ld.quanta, ld.bins());
    for (std::size_t b = 0; b < ld.bins(); ++b)
      if (ld.counts[b] != expected[b]) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "mismatch at spectrum %d bin %zu", trial, b);
        return {false, buf};
      }
    ++spectra;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "%d randomized spectra (max %lld states) match enumeration bin-exactly",
                spectra, largest_space);
  return {spectra >= 50, buf};
}

// ---------------------------------------------------------------------------
// 6. Einstein solid N=40, E=200: microcanonical occupancy vs Bose-Einstein.

Outcome criterion_6() {
  auto deviation = [](std::size_t n) {
    const double e = 5.0 * static_cast<double>(n);
    const LevelDensity ld = level_counts(einstein_spectrum(n, 1.0), e + 10.0, 1.0);
    const double t = microcanonical_temperature(ld, e, 5).temperature;
    const double n_mc = microcanonical_mode_occupancy(einstein_spectrum(n, 1.0), e, 1.0, 0);
    const double n_be = bose_einstein_occupancy(1.0, t);
    return std::abs(n_mc - n_be) / n_be;
  };
  const double d10 = deviation(10), d20 = deviation(20), d40 = deviation(40);
  const bool monotone = d40 < d20 && d20 < d10;
  const bool within = d40 < 0.02;
  char buf[384];
  std::snprintf(buf, sizeof(buf),
                "N=40, E=200: rel deviation %.4f vs bound 0.02 (exact ensemble mean is "
                "E/N = 5, Bose-Einstein at T from the density-of-states slope gives "
                "%.4f; the gap is the finite-size 1/N correction); monotone over "
                "N={10,20,40}: %.4f > %.4f > %.4f %s",
                d40, 5.0 * (1.0 + d40),
                d10, d20, d40, monotone ? "(holds)" : "(violated)");
  return {within && monotone, buf};
}

// ---------------------------------------------------------------------------
// 7. Tower conservation over 1e6 Markov steps.

Outcome criterion_7() {
  auto matter = std::make_shared<const LevelDensity>(
      level_counts(einstein_spectrum(50, 1.0), 260.0, 1.0));
  const TowerState start = make_tower(PhotonModeSet{{1.0}, 1.0}, matter, 250.0);
  const EquilibrateResult res = equilibrate(start, 1000000, 20250807);

  double norm = 0.0;
  for (const TowerLevel& lvl : res.state.levels()) norm += lvl.norm_share;
  const bool norm_ok = std::abs(norm - 1.0) <= 1e-12;

  const long long total0 = start.total_quanta();
  bool quanta_ok = res.state.total_quanta() == total0;
  bool flux_ok = true;
  std::vector<int> prev = start.occupancy();
  for (const std::vector<int>& now : res.occupancy_series) {
    const long long dn = now[0] - prev[0];
    if (std::abs(dn) != 1) flux_ok = false;  // one unit of number norm per event
    // photon energy change per event is exactly dn * quantum
    prev = now;
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "|norm sum - 1| = %.1e (bound 1e-12); total quanta %lld == %lld exactly; "
                "each of %zu events moved exactly one photon (dE/dnorm = omega exact "
                "by integer bookkeeping)",
                std::abs(norm - 1.0), res.state.total_quanta(), total0,
                res.steps_taken);
  return {norm_ok && quanta_ok && flux_ok, buf};
}

// ---------------------------------------------------------------------------
// 8. Dynamical Planck: time averages vs stationary solve vs Bose-Einstein.

Outcome criterion_8() {
  auto matter = std::make_shared<const LevelDensity>(
      level_counts(einstein_spectrum(50, 1.0), 260.0, 1.0));
  const PhotonModeSet modes{{1.0}, 1.0};
  const TowerState start = make_tower(modes, matter, 250.0);
  const EquilibrateResult res = equilibrate(start, 1000000, 424242);
  const std::vector<double> exact = stationary_occupancy(modes, *matter, 250.0, 251);

  const double dev = std::abs(res.mean_occupancy[0] - exact[0]);
  const double se = res.stderr_occupancy[0];
  const bool dynamics_ok = dev <= 3.0 * se;

  // Bose-Einstein reference at the matter temperature in equilibrium.
  const double e_matter = std::floor(250.0 - exact[0]);
  const double t = microcanonical_temperature(*matter, e_matter, 5).temperature;
  const double planck = bose_einstein_occupancy(1.0, t);
  const double rel = std::abs(exact[0] - planck) / planck;
  const bool planck_ok = rel < 0.02;

  char buf[448];
  std::snprintf(buf, sizeof(buf),
                "time average %.4f vs stationary %.4f: deviation %.4f <= 3 SE = %.4f (%s); "
                "stationary vs Bose-Einstein at T(matter) = %.4f: n_planck = %.4f, rel "
                "deviation %.4f vs bound 0.02 (%s; the stationary mean is exactly "
                "E/(N+1), the 1/N gap to the Planck form closes only as N grows)",
                res.mean_occupancy[0], exact[0], dev, 3.0 * se,
                dynamics_ok ? "ok" : "violated", t, planck, rel,
                planck_ok ? "ok" : "violated");
  return {dynamics_ok && planck_ok, buf};
}

// ---------------------------------------------------------------------------
// 9. Gas partitioning: dilute contact fraction and dense virial equality.

Outcome criterion_9() {
  // Dilute run (packing 1.6%), temperature far below the contact barrier so
  // pairs always bounce; every particle must collide at least 100 times.
  const PacketGas dilute = make_packet_gas(24, 1.0, 0.1, 0.12, 400.0, 0.05, 150.0, 1.0, 99);
  const GasTrajectory traj = simulate_gas(dilute, 4000.0, 4e-3, 99, 25);
  std::size_t min_col = traj.collision_counts[0];
  for (std::size_t c : traj.collision_counts) min_col = std::min(min_col, c);
  const PartitionHistograms h = energy_partition_histograms(traj, 64);
  const double predicted = h.tau_r / h.tau_coll;
  const bool dilute_ok = traj.pass_through_events == 0 && min_col >= 100 &&
                         h.pe_positive_fraction < 2.0 * predicted &&
                         h.pe_positive_fraction > 0.5 * predicted;

  // Dense run: chain compressed between harmonic walls is a fixed-end
  // harmonic lattice (every bond permanently in contact). The shared energy
  // is the fluctuation about the static compressed minimum.
  const std::size_t n = 24;
  const double rc = 0.5, kappa = 200.0, compression = 0.12;
  PacketGas dense;
  dense.kappa = kappa;
  dense.wall_stiffness = kappa;
  dense.contact_radius = rc;
  dense.box_length =
      2.0 * rc * static_cast<double>(n) - compression * static_cast<double>(n + 1);
  dense.temperature = 0.2;
  for (std::size_t i = 0; i < n; ++i) {
    dense.positions.push_back(rc - compression +
                              (2.0 * rc - compression) * static_cast<double>(i));
    dense.masses.push_back(i % 2 == 0 ? 1.1 : 0.9);
    dense.packet_widths.push_back(1.0);
  }
  dense.velocities = sample_maxwell_boltzmann(n, 1.0, dense.temperature, 515);
  const GasTrajectory dtraj = simulate_gas(dense, 2000.0, 5e-4, 515, 200);
  const double pe_static =
      static_cast<double>(n + 1) * 0.5 * kappa * compression * compression;
  double ke = 0.0, pe = 0.0;
  std::size_t count = 0;
  for (std::size_t s = dtraj.sample_times.size() / 4; s < dtraj.sample_times.size(); ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      ke += dtraj.ke[s][i];
      pe += dtraj.pe[s][i];
    }
    ++count;
  }
  const double mean_ke = ke / static_cast<double>(count);
  const double mean_pe = pe / static_cast<double>(count) - pe_static;
  const double virial = std::abs(mean_ke - mean_pe) / mean_ke;
  const bool dense_ok = virial < 0.05;

  char buf[384];
  std::snprintf(buf, sizeof(buf),
                "dilute: min %zu collisions/particle, PE-contact fraction %.4f vs "
                "tau_r/tau_coll = %.4f (factor %.2f, bound 2); dense fixed-end chain: "
                "|<KE>-<PE>|/<KE> = %.4f about the static minimum (bound 0.05)",
                min_col, h.pe_positive_fraction, predicted,
                h.pe_positive_fraction / predicted, virial);
  return {dilute_ok && dense_ok, buf};
}

// ---------------------------------------------------------------------------
// 10. Reproducibility: identical config+seed, byte-identical data outputs.

Outcome criterion_10() {
  const auto configs = {
      nlohmann::json::parse(R"({"kind":"dos","seed":3,"params":{
        "matter":{"einstein":{"n_modes":8,"omega":1.0}},"e_max":30.0,"bin":1.0}})"),
      nlohmann::json::parse(R"({"kind":"tower","seed":11,"params":{
        "matter":{"einstein":{"n_modes":12,"omega":1.0}},"photon_modes":[1.0,2.0],
        "bin":1.0,"e_total":60.0,"steps":20000}})"),
      nlohmann::json::parse(R"({"kind":"gas","seed":5,"params":{
        "n_particles":10,"mass":1.0,"temperature":0.12,"kappa":400.0,
        "contact_radius":0.05,"box_length":50.0,"t_end":900.0,"sample_stride":50}})"),
      nlohmann::json::parse(R"({"kind":"collide","seed":1,"params":{
        "block_a":{"n_atoms":6,"mass":1.0,"stiffness":1.0},
        "block_b":{"n_atoms":6,"mass":1.0,"stiffness":1.0},
        "joint_stiffness":1.0,"velocity_a":0.4,"velocity_b":-0.4,
        "zero_mode_width":1.0,"t_end":80.0,"samples":100}})"),
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  int artifacts = 0;
  for (const auto& config : configs) {
    const fs::path d1 = fs::temp_directory_path() / "thermalize_acc_a";
    const fs::path d2 = fs::temp_directory_path() / "thermalize_acc_b";
    fs::remove_all(d1);
    fs::remove_all(d2);
    RunOptions o1, o2;
    o1.out_dir = d1;
    o2.out_dir = d2;
    const RunResult r1 = run_experiment(config, o1);
    run_experiment(config, o2);
    for (const auto& name : r1.manifest["outputs"]) {
      const std::string f = name.get<std::string>();
      if (slurp(d1 / f) != slurp(d2 / f)) {
        return {false, "artifact " + f + " differs between identical reruns"};
      }
      ++artifacts;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "%d artifacts across 4 experiment kinds byte-identical on rerun "
                "(manifest excluded: it records wall time)",
                artifacts);
  return {artifacts > 0, buf};
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::strcmp(argv[i], "--criterion") == 0) only = std::atoi(argv[i + 1]);

  Outcome (*checks[])() = {criterion_1, criterion_2, criterion_3, criterion_4,
                           criterion_5, criterion_6, criterion_7, criterion_8,
                           criterion_9, criterion_10};
  bool all_pass = true;
  for (int k = 1; k <= 10; ++k) {
    if (only != 0 && only != k) continue;
    Outcome o;
    try {
      o = checks[k - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("ACCEPTANCE %2d: %s - %s\n", k, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
