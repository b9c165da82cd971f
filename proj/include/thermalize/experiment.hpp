#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "thermalize/csv.hpp"
#include "thermalize/errors.hpp"
#include "thermalize/gas.hpp"
#include "thermalize/lattice.hpp"
#include "thermalize/qdyn.hpp"
#include "thermalize/spectrum.hpp"
#include "thermalize/svg.hpp"
#include "thermalize/tower.hpp"

namespace thermalize {

inline constexpr const char* kVersion = "0.1.0";

struct Units {
  double hbar = 1.0;
  double kb = 1.0;
};

struct RunOptions {
  std::filesystem::path out_dir = ".";
  std::optional<std::uint64_t> seed_override;
  bool validate_only = false;
};

struct RunResult {
  std::filesystem::path manifest_path;
  nlohmann::ordered_json manifest;
  bool validated_only = false;
};

namespace expdetail {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

inline const json& req(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw config_error(path + key, "missing field");
  return j.at(key);
}

inline double req_num(const json& j, const std::string& key, const std::string& path) {
  const json& v = req(j, key, path);
  if (!v.is_number()) throw config_error(path + key, "expected a number");
  return v.get<double>();
}

inline double opt_num(const json& j, const std::string& key, double fallback,
                      const std::string& path) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw config_error(path + key, "expected a number");
  return j.at(key).get<double>();
}

inline long long req_int(const json& j, const std::string& key, const std::string& path) {
  const json& v = req(j, key, path);
  if (!v.is_number_integer()) throw config_error(path + key, "expected an integer");
  return v.get<long long>();
}

inline long long opt_int(const json& j, const std::string& key, long long fallback,
                         const std::string& path) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer()) throw config_error(path + key, "expected an integer");
  return j.at(key).get<long long>();
}

inline std::string req_str(const json& j, const std::string& key, const std::string& path) {
  const json& v = req(j, key, path);
  if (!v.is_string()) throw config_error(path + key, "expected a string");
  return v.get<std::string>();
}

inline Lattice chain_from_json(const json& j, const std::string& path) {
  const long long n = req_int(j, "n_atoms", path);
  if (n < 1) throw config_error(path + "n_atoms", "must be >= 1");
  const double mass = req_num(j, "mass", path);
  const double stiffness = req_num(j, "stiffness", path);
  const double spacing = opt_num(j, "spacing", 1.0, path);
  const std::string b = j.contains("boundary") ? req_str(j, "boundary", path) : "free";
  try {
    return build_chain(static_cast<std::size_t>(n), mass, stiffness, spacing,
                       boundary_from_string(b));
  } catch (const error& e) {
    throw config_error(path, e.what());
  }
}

/// Matter/mode spectrum from one of: an Einstein block, an explicit
/// frequency list, or the internal (bound) modes of a chain.
inline ModeSpectrum spectrum_from_json(const json& j, const std::string& path) {
  ModeSpectrum spec;
  if (j.contains("einstein")) {
    const json& e = j.at("einstein");
    const long long n = req_int(e, "n_modes", path + "einstein.");
    const double omega = opt_num(e, "omega", 1.0, path + "einstein.");
    if (n < 1) throw config_error(path + "einstein.n_modes", "must be >= 1");
    if (!(omega > 0.0)) throw config_error(path + "einstein.omega", "must be > 0");
    return einstein_spectrum(static_cast<std::size_t>(n), omega);
  }
  if (j.contains("frequencies")) {
    const json& f = j.at("frequencies");
    if (!f.is_array() || f.empty())
      throw config_error(path + "frequencies", "expected a non-empty array");
    for (const auto& v : f) {
      if (!v.is_number() || !(v.get<double>() > 0.0))
        throw config_error(path + "frequencies", "entries must be positive numbers");
      spec.frequencies.push_back(v.get<double>());
    }
    std::sort(spec.frequencies.begin(), spec.frequencies.end());
    return spec;
  }
  if (j.contains("chain")) {
    const Lattice l = chain_from_json(j.at("chain"), path + "chain.");
    const NormalModeBasis basis = normal_modes(l);
    for (double w : basis.frequencies)
      if (w > 0.0) spec.frequencies.push_back(w);
    if (spec.frequencies.empty()) throw config_error(path + "chain", "chain has no bound modes");
    return spec;
  }
  throw config_error(path, "expected one of: einstein, frequencies, chain");
}

inline std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

/// Named text artifacts assembled in memory; nothing touches disk until the
/// whole run has succeeded.
struct Outputs {
  std::vector<std::pair<std::string, std::string>> files;
  void add(std::string name, std::string content) {
    files.emplace_back(std::move(name), std::move(content));
  }
};

// ---------------------------------------------------------------------------
// modes

struct ModesParams {
  Lattice lattice;
};

inline ModesParams parse_modes(const json& p, std::uint64_t) {
  ModesParams mp;
  if (p.contains("merge")) {
    const json& m = p.at("merge");
    const Lattice a = chain_from_json(req(m, "a", "params.merge."), "params.merge.a.");
    const Lattice b = chain_from_json(req(m, "b", "params.merge."), "params.merge.b.");
    const double joint = req_num(m, "joint_stiffness", "params.merge.");
    try {
      mp.lattice = merge_lattices(a, b, joint);
    } catch (const error& e) {
      throw config_error("params.merge", e.what());
    }
  } else {
    mp.lattice = chain_from_json(req(p, "chain", "params."), "params.chain.");
  }
  return mp;
}

inline void run_modes(const ModesParams& mp, const Units&, std::uint64_t, Outputs& out,
                      ojson& summary) {
  const NormalModeBasis basis = normal_modes(mp.lattice);

  out.add("lattice.json", lattice_to_json(mp.lattice).dump(2) + "\n");

  Csv csv("mode,omega");
  std::vector<double> ks, ws;
  for (std::size_t i = 0; i < basis.size(); ++i) {
    csv.row(i, basis.frequencies[i]);
    ks.push_back(static_cast<double>(i));
    ws.push_back(basis.frequencies[i]);
  }
  out.add("modes.csv", csv.str());

  SvgPlot plot("Normal mode spectrum", "mode index", "omega");
  plot.add_points(ks, ws, "#1f77b4");
  out.add("modes.svg", plot.render());

  summary["n_modes"] = basis.size();
  summary["zero_mode_count"] = basis.zero_mode_count;
  summary["omega_max"] = basis.max_frequency();
}

// ---------------------------------------------------------------------------
// collide

struct CollideParams {
  Lattice block_a, block_b, fused;
  double joint = 0.0, velocity_a = 0.0, velocity_b = 0.0;
  double zero_mode_width = 0.0, t_end = 0.0;
  long long samples = 0;
};

inline CollideParams parse_collide(const json& p, std::uint64_t) {
  CollideParams cp;
  cp.block_a = chain_from_json(req(p, "block_a", "params."), "params.block_a.");
  cp.block_b = chain_from_json(req(p, "block_b", "params."), "params.block_b.");
  cp.joint = req_num(p, "joint_stiffness", "params.");
  cp.velocity_a = req_num(p, "velocity_a", "params.");
  cp.velocity_b = req_num(p, "velocity_b", "params.");
  cp.zero_mode_width = req_num(p, "zero_mode_width", "params.");
  cp.t_end = req_num(p, "t_end", "params.");
  cp.samples = opt_int(p, "samples", 400, "params.");
  if (!(cp.zero_mode_width > 0.0)) throw config_error("params.zero_mode_width", "must be > 0");
  if (!(cp.t_end > 0.0)) throw config_error("params.t_end", "must be > 0");
  if (cp.samples < 2) throw config_error("params.samples", "must be >= 2");
  try {
    cp.fused = merge_lattices(cp.block_a, cp.block_b, cp.joint);
  } catch (const error& e) {
    throw config_error("params.joint_stiffness", e.what());
  }
  return cp;
}

inline void run_collide(const CollideParams& cp, const Units&, std::uint64_t, Outputs& out,
                        ojson& summary) {
  auto basis = std::make_shared<const NormalModeBasis>(normal_modes(cp.fused));
  std::vector<double> velocities(cp.fused.size(), cp.velocity_a);
  for (std::size_t j = cp.block_a.size(); j < cp.fused.size(); ++j)
    velocities[j] = cp.velocity_b;
  const GaussianState start = apply_boost(ground_state(basis, cp.zero_mode_width), velocities);

  Csv widths("t,atom_index,width");
  Csv energies("t,mode_index,energy");
  std::vector<double> ts, max_widths, cm_widths;
  double worst = 0.0;
  for (long long s = 0; s < cp.samples; ++s) {
    const double t = cp.t_end * static_cast<double>(s) / static_cast<double>(cp.samples - 1);
    const GaussianState st = evolve_to(start, t);
    double max_w = 0.0;
    for (std::size_t j = 0; j < cp.fused.size(); ++j) {
      const double w = atom_width(st, j);
      widths.row(t, j, w);
      max_w = std::max(max_w, w);
    }
    for (std::size_t i = 0; i < basis->size(); ++i) energies.row(t, i, mode_energy(st, i));
    ts.push_back(t);
    max_widths.push_back(max_w);
    cm_widths.push_back(cm_width(st));
    worst = std::max(worst, max_w);
  }
  out.add("widths.csv", widths.str());
  out.add("energies.csv", energies.str());
  out.add("lattice.json", lattice_to_json(cp.fused).dump(2) + "\n");

  SvgPlot plot("Atomic width under collision", "t", "width");
  plot.add_line(ts, max_widths, "#d62728");
  plot.add_line(ts, cm_widths, "#1f77b4");
  out.add("widths.svg", plot.render());

  const double m1 = cp.block_a.total_mass(), m2 = cp.block_b.total_mass();
  const double mu = m1 * m2 / (m1 + m2);
  double zero_point = 0.0, internal = 0.0;
  for (std::size_t i = 0; i < basis->size(); ++i) {
    const double w = basis->frequencies[i];
    if (w > 0.0) {
      zero_point += 0.5 * w;
      internal += mode_energy(start, i);
    }
  }
  summary["max_width"] = worst;
  summary["internal_energy"] = internal - zero_point;
  summary["expected_internal_energy"] =
      0.5 * mu * (cp.velocity_a - cp.velocity_b) * (cp.velocity_a - cp.velocity_b);
  summary["omega_min_internal"] = basis->min_bound_frequency();
  summary["omega_max"] = basis->max_frequency();
}

// ---------------------------------------------------------------------------
// recurrence

struct RecurrenceParams {
  Lattice lattice;
  std::optional<double> zero_mode_width;
  std::vector<double> atom_velocities;
  double phase_tol = 0.0, width_threshold = 0.0, cm_threshold = 0.0, t_max = 0.0;
  long long samples = 0;
};

inline RecurrenceParams parse_recurrence(const json& p, std::uint64_t) {
  RecurrenceParams rp;
  rp.lattice = chain_from_json(req(p, "chain", "params."), "params.chain.");
  if (rp.lattice.boundary == Boundary::free_ends) {
    const double z = req_num(p, "zero_mode_width", "params.");
    if (!(z > 0.0)) throw config_error("params.zero_mode_width", "must be > 0");
    rp.zero_mode_width = z;
  }
  if (p.contains("atom_velocities")) {
    const json& vj = p.at("atom_velocities");
    if (!vj.is_array() || vj.size() != rp.lattice.size())
      throw config_error("params.atom_velocities", "expected one velocity per atom");
    for (const auto& x : vj) {
      if (!x.is_number())
        throw config_error("params.atom_velocities", "entries must be numbers");
      rp.atom_velocities.push_back(x.get<double>());
    }
  }
  rp.phase_tol = opt_num(p, "phase_tol", 0.05, "params.");
  rp.width_threshold = opt_num(p, "width_threshold", rp.lattice.spacing / 2.0, "params.");
  rp.cm_threshold = opt_num(p, "cm_threshold", rp.lattice.spacing, "params.");
  rp.t_max = req_num(p, "t_max", "params.");
  rp.samples = opt_int(p, "samples", 400, "params.");
  if (!(rp.phase_tol > 0.0 && rp.phase_tol < 1.0))
    throw config_error("params.phase_tol", "must be in (0, 1)");
  if (!(rp.width_threshold > 0.0)) throw config_error("params.width_threshold", "must be > 0");
  if (!(rp.cm_threshold > 0.0)) throw config_error("params.cm_threshold", "must be > 0");
  if (!(rp.t_max > 0.0)) throw config_error("params.t_max", "must be > 0");
  if (rp.samples < 2) throw config_error("params.samples", "must be >= 2");
  return rp;
}

inline void run_recurrence(const RecurrenceParams& rp, const Units&, std::uint64_t,
                           Outputs& out, ojson& summary) {
  auto basis = std::make_shared<const NormalModeBasis>(normal_modes(rp.lattice));
  GaussianState state = ground_state(basis, rp.zero_mode_width);
  if (!rp.atom_velocities.empty()) state = apply_boost(state, rp.atom_velocities);

  const RecurrenceReport report =
      recurrence_times(state, rp.phase_tol, rp.width_threshold, rp.cm_threshold, rp.t_max);
  out.add("recurrence.json", recurrence_to_json(report).dump(2) + "\n");

  Csv widths("t,atom_index,width");
  std::vector<double> ts, max_ws;
  for (long long s = 0; s < rp.samples; ++s) {
    const double t = rp.t_max * static_cast<double>(s) / static_cast<double>(rp.samples - 1);
    const GaussianState st = evolve_to(state, t);
    double max_w = 0.0;
    for (std::size_t j = 0; j < rp.lattice.size(); ++j) {
      const double w = atom_width(st, j);
      widths.row(t, j, w);
      max_w = std::max(max_w, w);
    }
    ts.push_back(t);
    max_ws.push_back(max_w);
  }
  out.add("widths.csv", widths.str());

  SvgPlot plot("Recurrence scan", "t", "max atomic width");
  plot.add_line(ts, max_ws, "#d62728");
  plot.add_line({0.0, rp.t_max}, {rp.width_threshold, rp.width_threshold}, "#7f7f7f");
  out.add("recurrence.svg", plot.render());

  summary["t_vib"] = report.t_vib ? ojson(*report.t_vib) : ojson(nullptr);
  summary["t_loc"] = report.t_loc ? ojson(*report.t_loc) : ojson(nullptr);
  summary["t_class"] = report.t_class ? ojson(*report.t_class) : ojson(nullptr);
}

// ---------------------------------------------------------------------------
// dos

struct DosParams {
  ModeSpectrum spec;
  double e_max = 0.0, bin = 0.0;
};

inline DosParams parse_dos(const json& p, std::uint64_t) {
  DosParams dp;
  dp.spec = spectrum_from_json(req(p, "matter", "params."), "params.matter.");
  dp.e_max = req_num(p, "e_max", "params.");
  dp.bin = req_num(p, "bin", "params.");
  if (!(dp.e_max > 0.0)) throw config_error("params.e_max", "must be > 0");
  if (!(dp.bin > 0.0) || dp.bin > dp.e_max)
    throw config_error("params.bin", "must be in (0, e_max]");
  try {
    snap_to_grid(dp.spec, dp.bin);
  } catch (const error& e) {
    throw config_error("params.bin", e.what());
  }
  return dp;
}

inline void run_dos(const DosParams& dp, const Units&, std::uint64_t, Outputs& out,
                    ojson& summary) {
  const LevelDensity ld = level_counts(dp.spec, dp.e_max, dp.bin);
  Csv csv("E_bin_left,count");
  std::vector<double> es, gs;
  for (std::size_t b = 0; b < ld.bins(); ++b) {
    csv.row(static_cast<double>(b) * ld.bin, ld.counts[b].str());
    if (ld.counts[b] > 0) {
      es.push_back(static_cast<double>(b) * ld.bin);
      gs.push_back(big_ratio(ld.counts[b], BigInt(1)));
    }
  }
  out.add("dos.csv", csv.str());

  SvgPlot plot("Density of states", "E", "g(E)", true);
  plot.add_points(es, gs, "#1f77b4");
  out.add("dos.svg", plot.render());

  summary["bins"] = ld.bins();
  summary["modes"] = dp.spec.size();
}

// ---------------------------------------------------------------------------
// planck

struct PlanckParams {
  ModeSpectrum spec;
  double e_total = 0.0, bin = 0.0;
  int window = 5;
};

inline PlanckParams parse_planck(const json& p, std::uint64_t) {
  PlanckParams pp;
  pp.spec = spectrum_from_json(req(p, "matter", "params."), "params.matter.");
  pp.e_total = req_num(p, "e_total", "params.");
  pp.bin = req_num(p, "bin", "params.");
  pp.window = static_cast<int>(opt_int(p, "window_bins", 5, "params."));
  if (!(pp.e_total > 0.0)) throw config_error("params.e_total", "must be > 0");
  if (!(pp.bin > 0.0)) throw config_error("params.bin", "must be > 0");
  if (pp.window < 1) throw config_error("params.window_bins", "must be >= 1");
  try {
    snap_to_grid(pp.spec, pp.bin);
  } catch (const error& e) {
    throw config_error("params.bin", e.what());
  }
  return pp;
}

inline void run_planck(const PlanckParams& pp, const Units& units, std::uint64_t,
                       Outputs& out, ojson& summary) {
  const double e_max = pp.e_total + static_cast<double>(pp.window + 2) * pp.bin;
  const LevelDensity ld = level_counts(pp.spec, e_max, pp.bin);
  const TemperatureEstimate te = microcanonical_temperature(ld, pp.e_total, pp.window);

  Csv csv("mode,omega,n_microcanonical,n_bose_einstein,rel_diff");
  std::vector<double> ws, mc, be;
  double max_rel = 0.0;
  for (std::size_t i = 0; i < pp.spec.size(); ++i) {
    double n_mc;
    if (i > 0 && pp.spec.frequencies[i] == pp.spec.frequencies[i - 1]) {
      n_mc = mc.back();  // identical frequencies share one marginal
    } else {
      n_mc = microcanonical_mode_occupancy(pp.spec, pp.e_total, pp.bin, i);
    }
    const double n_be =
        bose_einstein_occupancy(pp.spec.frequencies[i], te.temperature, units.hbar, units.kb);
    const double rel = n_be != 0.0 ? std::abs(n_mc - n_be) / n_be : 0.0;
    csv.row(i, pp.spec.frequencies[i], n_mc, n_be, rel);
    ws.push_back(pp.spec.frequencies[i]);
    mc.push_back(n_mc);
    be.push_back(n_be);
    if (n_be >= 0.1) max_rel = std::max(max_rel, rel);
  }
  out.add("planck.csv", csv.str());

  SvgPlot plot("Mode occupancy vs Bose-Einstein", "omega", "mean occupancy");
  plot.add_line(ws, be, "#1f77b4");
  plot.add_points(ws, mc, "#d62728");
  out.add("planck.svg", plot.render());

  summary["temperature"] = te.temperature;
  summary["max_rel_diff"] = max_rel;
}

// ---------------------------------------------------------------------------
// tower

struct TowerParams {
  ModeSpectrum spec;
  PhotonModeSet modes;
  double bin = 0.0, e_total = 0.0;
  long long steps = 0;
  int n_cap = 0;  // 0 = derive from the energy bound
};

inline TowerParams parse_tower(const json& p, std::uint64_t) {
  TowerParams tp;
  tp.spec = spectrum_from_json(req(p, "matter", "params."), "params.matter.");
  const json& pm = req(p, "photon_modes", "params.");
  if (!pm.is_array() || pm.empty())
    throw config_error("params.photon_modes", "expected a non-empty array");
  for (const auto& v : pm) {
    if (!v.is_number() || !(v.get<double>() > 0.0))
      throw config_error("params.photon_modes", "entries must be positive numbers");
    tp.modes.frequencies.push_back(v.get<double>());
  }
  std::sort(tp.modes.frequencies.begin(), tp.modes.frequencies.end());
  tp.modes.mu0 = opt_num(p, "mu0", 1.0, "params.");
  if (!(tp.modes.mu0 > 0.0)) throw config_error("params.mu0", "must be > 0");
  tp.bin = req_num(p, "bin", "params.");
  tp.e_total = req_num(p, "e_total", "params.");
  tp.steps = req_int(p, "steps", "params.");
  tp.n_cap = static_cast<int>(opt_int(p, "n_cap", 0, "params."));
  if (!(tp.bin > 0.0)) throw config_error("params.bin", "must be > 0");
  if (!(tp.e_total > 0.0)) throw config_error("params.e_total", "must be > 0");
  if (tp.steps < 1) throw config_error("params.steps", "must be >= 1");
  if (tp.n_cap < 0) throw config_error("params.n_cap", "must be >= 0");
  try {
    snap_to_grid(tp.spec, tp.bin);
    for (double w : tp.modes.frequencies) {
      const double q = w / tp.bin;
      if (std::abs(q - std::llround(q)) > 1e-9 * q || std::llround(q) < 1)
        throw parameter_error("photon frequency not commensurate with the energy grid");
    }
    const double eq = tp.e_total / tp.bin;
    if (std::abs(eq - std::llround(eq)) > 1e-9 * std::max(1.0, eq))
      throw parameter_error("e_total not commensurate with the energy grid");
  } catch (const error& e) {
    throw config_error("params.bin", e.what());
  }
  return tp;
}

inline void run_tower(const TowerParams& tp, const Units& units, std::uint64_t seed,
                      Outputs& out, ojson& summary) {
  // Table reaches past e_total so the temperature window below always fits.
  auto matter = std::make_shared<const LevelDensity>(
      level_counts(tp.spec, tp.e_total + 7.0 * tp.bin, tp.bin));
  const TowerState start = make_tower(tp.modes, matter, tp.e_total);
  const EquilibrateResult res = equilibrate(start, static_cast<std::size_t>(tp.steps), seed);

  Csv traj("step,mode,occupancy");
  for (std::size_t s = 0; s < res.occupancy_series.size(); ++s)
    for (std::size_t a = 0; a < tp.modes.size(); ++a)
      traj.row(s, a, res.occupancy_series[s][a]);
  out.add("tower_trajectory.csv", traj.str());

  const int cap =
      tp.n_cap > 0 ? tp.n_cap
                   : static_cast<int>(std::ceil(tp.e_total / tp.modes.frequencies.front())) + 1;
  const StationaryResult st = stationary_solve(tp.modes, *matter, tp.e_total, cap);
  double photon_energy = 0.0;
  for (std::size_t a = 0; a < tp.modes.size(); ++a)
    photon_energy += st.mean_occupancy[a] * tp.modes.frequencies[a];
  // Planck reference at the matter temperature in equilibrium: evaluate the
  // log-density slope at the nearest grid point to the mean matter energy.
  const double e_matter = tp.e_total - photon_energy;
  const double e_eval = std::floor(e_matter / tp.bin) * tp.bin;
  const TemperatureEstimate te = microcanonical_temperature(*matter, e_eval, 5);

  Csv cmp("mode,omega,n_stationary,n_planck,rel_diff");
  std::vector<double> ws, ns;
  for (std::size_t a = 0; a < tp.modes.size(); ++a) {
    const double n_planck =
        bose_einstein_occupancy(tp.modes.frequencies[a], te.temperature, units.hbar, units.kb);
    const double rel =
        n_planck != 0.0 ? std::abs(st.mean_occupancy[a] - n_planck) / n_planck : 0.0;
    cmp.row(a, tp.modes.frequencies[a], st.mean_occupancy[a], n_planck, rel);
    ws.push_back(tp.modes.frequencies[a]);
    ns.push_back(st.mean_occupancy[a]);
  }
  out.add("tower_comparison.csv", cmp.str());

  std::vector<double> step_idx, occ0;
  for (std::size_t s = 0; s < res.occupancy_series.size(); ++s) {
    step_idx.push_back(static_cast<double>(s));
    occ0.push_back(static_cast<double>(res.occupancy_series[s][0]));
  }
  SvgPlot plot("Photon occupancy trajectory", "step", "occupancy of softest mode");
  plot.add_line(step_idx, occ0, "#1f77b4");
  out.add("tower.svg", plot.render());

  summary["truncation"] = cap;
  summary["stationary_tail_mass"] = st.tail_mass;
  summary["temperature"] = te.temperature;
  summary["steps_taken"] = res.steps_taken;
  summary["absorbed"] = res.absorbed;
  auto mean = ojson::array();
  for (double v : res.mean_occupancy) mean.push_back(v);
  summary["time_averaged_occupancy"] = mean;
}

// ---------------------------------------------------------------------------
// gas

struct GasParams {
  PacketGas gas;
  double t_end = 0.0, dt = 0.0;
  long long bins = 0, stride = 0;
};

inline GasParams parse_gas(const json& p, std::uint64_t seed) {
  const long long n = req_int(p, "n_particles", "params.");
  const double mass = req_num(p, "mass", "params.");
  const double dispersion = opt_num(p, "mass_dispersion", 0.1, "params.");
  const double temperature = req_num(p, "temperature", "params.");
  const double kappa = req_num(p, "kappa", "params.");
  const double r_c = req_num(p, "contact_radius", "params.");
  const double box = req_num(p, "box_length", "params.");
  const double sigma0 = opt_num(p, "sigma0", 1.0, "params.");
  GasParams gp;
  gp.t_end = req_num(p, "t_end", "params.");
  gp.bins = opt_int(p, "bins", 64, "params.");
  gp.stride = opt_int(p, "sample_stride", 10, "params.");
  if (n < 1) throw config_error("params.n_particles", "must be >= 1");
  if (!(gp.t_end > 0.0)) throw config_error("params.t_end", "must be > 0");
  if (gp.bins < 2) throw config_error("params.bins", "must be >= 2");
  if (gp.stride < 1) throw config_error("params.sample_stride", "must be >= 1");
  try {
    gp.gas = make_packet_gas(static_cast<std::size_t>(n), mass, dispersion, temperature,
                             kappa, r_c, box, sigma0, seed);
  } catch (const error& e) {
    throw config_error("params", e.what());
  }
  const double dt_bound = 0.05 * M_PI * std::sqrt(gp.gas.min_mass() / (2.0 * kappa));
  gp.dt = opt_num(p, "dt", 0.5 * dt_bound, "params.");
  if (!(gp.dt > 0.0) || gp.dt >= dt_bound)
    throw config_error("params.dt", "must be in (0, " + format_double(dt_bound) + ")");
  return gp;
}

inline void run_gas(const GasParams& gp, const Units&, std::uint64_t seed, Outputs& out,
                    ojson& summary) {
  const GasTrajectory traj =
      simulate_gas(gp.gas, gp.t_end, gp.dt, seed, static_cast<std::size_t>(gp.stride));

  Csv tcsv("t,particle,x,v,ke,pe");
  Csv scsv("t,particle,sigma");
  for (std::size_t s = 0; s < traj.sample_times.size(); ++s) {
    for (std::size_t i = 0; i < gp.gas.size(); ++i) {
      tcsv.row(traj.sample_times[s], i, traj.x[s][i], traj.v[s][i], traj.ke[s][i],
               traj.pe[s][i]);
      scsv.row(traj.sample_times[s], i, traj.sigma[s][i]);
    }
  }
  out.add("gas_trajectory.csv", tcsv.str());
  out.add("gas_packet_width.csv", scsv.str());

  const PartitionHistograms hist =
      energy_partition_histograms(traj, static_cast<std::size_t>(gp.bins));
  Csv hcsv("E,h_ke,h_pe");
  std::vector<double> es;
  for (std::size_t b = 0; b < hist.energy_grid.size(); ++b) {
    hcsv.row(hist.energy_grid[b], hist.h_ke[b], hist.h_pe[b]);
    es.push_back(hist.energy_grid[b]);
  }
  out.add("gas_histograms.csv", hcsv.str());

  ojson summary_json;
  summary_json["tau_r"] = hist.tau_r;
  summary_json["tau_coll"] = hist.tau_coll;
  summary_json["A_fit"] = hist.a_fit;
  summary_json["gamma_fit"] = hist.gamma_fit;
  summary_json["ks_stat"] = hist.ks_stat;
  out.add("gas_summary.json", summary_json.dump(2) + "\n");

  SvgPlot plot("Energy partition", "E", "density");
  plot.add_line(es, hist.h_ke, "#1f77b4");
  plot.add_line(es, hist.h_pe, "#d62728");
  out.add("gas.svg", plot.render());

  summary["mean_ke"] = hist.mean_ke;
  summary["mean_pe"] = hist.mean_pe;
  summary["pe_positive_fraction"] = hist.pe_positive_fraction;
  summary["max_energy_drift"] = traj.max_energy_drift;
  summary["collisions"] = std::accumulate(traj.collision_counts.begin(),
                                          traj.collision_counts.end(), std::size_t{0}) /
                          2;
}

}  // namespace expdetail

/// Validates the configuration, runs the named experiment, writes every
/// artifact plus a manifest into out_dir, and returns the manifest path.
/// Validation happens before any computation; nothing is written until the
/// whole run has succeeded.
inline RunResult run_experiment(const nlohmann::json& config, const RunOptions& opts = {}) {
  using expdetail::ojson;

  if (!config.is_object()) throw config_error("", "configuration must be a JSON object");
  const std::string kind = expdetail::req_str(config, "kind", "");
  std::uint64_t seed = 0;
  if (opts.seed_override) {
    seed = *opts.seed_override;
  } else if (config.contains("seed")) {
    if (!config.at("seed").is_number_integer() && !config.at("seed").is_number_unsigned())
      throw config_error("seed", "expected an integer");
    const auto s = config.at("seed").get<long long>();
    if (s < 0) throw config_error("seed", "must be >= 0");
    seed = static_cast<std::uint64_t>(s);
  }
  Units units;
  if (config.contains("units")) {
    const auto& u = config.at("units");
    units.hbar = expdetail::opt_num(u, "hbar", 1.0, "units.");
    units.kb = expdetail::opt_num(u, "k_b", 1.0, "units.");
    if (!(units.hbar > 0.0)) throw config_error("units.hbar", "must be > 0");
    if (!(units.kb > 0.0)) throw config_error("units.k_b", "must be > 0");
  }
  const nlohmann::json params =
      config.contains("params") ? config.at("params") : nlohmann::json::object();

  // Parse (and fully validate) before any compute.
  std::function<void(expdetail::Outputs&, ojson&)> compute;
  if (kind == "modes") {
    auto p = expdetail::parse_modes(params, seed);
    compute = [p = std::move(p), units, seed](expdetail::Outputs& o, ojson& s) {
      expdetail::run_modes(p, units, seed, o, s);
    };
  } else if (kind == "collide") {
    auto p = expdetail::parse_collide(params, seed);
    compute = [p = std::move(p), units, seed](expdetail::Outputs& o, ojson& s) {
      expdetail::run_collide(p, units, seed, o, s);
    };
  } else if (kind == "recurrence") {
    auto p = expdetail::parse_recurrence(params, seed);
    compute = [p = std::move(p), units, seed](expdetail::Outputs& o, ojson& s) {
      expdetail::run_recurrence(p, units, seed, o, s);
    };
  } else if (kind == "dos") {
    auto p = expdetail::parse_dos(params, seed);
    compute = [p = std::move(p), units, seed](expdetail::Outputs& o, ojson& s) {
      expdetail::run_dos(p, units, seed, o, s);
    };
  } else if (kind == "planck") {
    auto p = expdetail::parse_planck(params, seed);
    compute = [p = std::move(p), units, seed](expdetail::Outputs& o, ojson& s) {
      expdetail::run_planck(p, units, seed, o, s);
    };
  } else if (kind == "tower") {
    auto p = expdetail::parse_tower(params, seed);
    compute = [p = std::move(p), units, seed](expdetail::Outputs& o, ojson& s) {
      expdetail::run_tower(p, units, seed, o, s);
    };
  } else if (kind == "gas") {
    auto p = expdetail::parse_gas(params, seed);
    compute = [p = std::move(p), units, seed](expdetail::Outputs& o, ojson& s) {
      expdetail::run_gas(p, units, seed, o, s);
    };
  } else {
    throw config_error("kind", "unknown experiment kind '" + kind + "'");
  }

  RunResult result;
  if (opts.validate_only) {
    result.validated_only = true;
    result.manifest = ojson{{"validated", true}, {"kind", kind}};
    return result;
  }

  // Resolved config: what the run actually used, in canonical field order.
  ojson resolved;
  resolved["kind"] = kind;
  resolved["seed"] = seed;
  resolved["units"] = ojson{{"hbar", units.hbar}, {"k_b", units.kb}};
  resolved["params"] = params;

  const auto t0 = std::chrono::steady_clock::now();
  expdetail::Outputs outputs;
  ojson summary;
  compute(outputs, summary);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::filesystem::create_directories(opts.out_dir);
  std::vector<std::filesystem::path> written;
  try {
    for (const auto& [name, content] : outputs.files) {
      const auto path = opts.out_dir / name;
      write_file(path, content);
      written.push_back(path);
    }
    ojson manifest;
    manifest["kind"] = kind;
    manifest["version"] = kVersion;
    manifest["config_hash"] = expdetail::hex64(expdetail::fnv1a(resolved.dump()));
    manifest["seed"] = seed;
    manifest["wall_time_s"] = wall;
    auto names = ojson::array();
    for (const auto& [name, content] : outputs.files) names.push_back(name);
    manifest["outputs"] = names;
    manifest["summary"] = summary;
    manifest["config"] = resolved;
    result.manifest_path = opts.out_dir / "manifest.json";
    write_file(result.manifest_path, manifest.dump(2) + "\n");
    result.manifest = std::move(manifest);
  } catch (...) {
    for (const auto& p : written) {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
    throw;
  }
  return result;
}

}  // namespace thermalize
