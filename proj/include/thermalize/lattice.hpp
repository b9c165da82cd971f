#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "thermalize/errors.hpp"

namespace thermalize {

enum class Boundary { free_ends, fixed_ends };

inline std::string to_string(Boundary b) {
  return b == Boundary::free_ends ? "free" : "fixed";
}

inline Boundary boundary_from_string(const std::string& s) {
  if (s == "free") return Boundary::free_ends;
  if (s == "fixed") return Boundary::fixed_ends;
  throw parameter_error("unknown boundary '" + s + "' (expected \"free\" or \"fixed\")");
}

/// Harmonic bond between adjacent sites. Site index -1 denotes the left
/// wall anchor and size() the right one; wall anchors are massless and only
/// appear for fixed-end chains.
struct Spring {
  int a = 0;
  int b = 0;
  double stiffness = 0.0;
};

/// 1D chain of point masses joined by springs, at its classical equilibrium.
struct Lattice {
  std::vector<double> masses;
  std::vector<Spring> springs;
  std::vector<double> positions;
  Boundary boundary = Boundary::free_ends;
  double spacing = 1.0;

  std::size_t size() const { return masses.size(); }

  double total_mass() const {
    double m = 0.0;
    for (double mi : masses) m += mi;
    return m;
  }

  void validate() const {
    const int n = static_cast<int>(masses.size());
    if (n == 0) throw parameter_error("lattice must contain at least one atom");
    if (positions.size() != masses.size())
      throw parameter_error("positions and masses must have equal length");
    for (double m : masses)
      if (!(m > 0.0)) throw parameter_error("all masses must be > 0");
    for (std::size_t j = 1; j < positions.size(); ++j)
      if (!(positions[j] > positions[j - 1]))
        throw parameter_error("equilibrium positions must be strictly increasing");
    if (!(spacing > 0.0)) throw parameter_error("spacing must be > 0");
    for (const Spring& s : springs) {
      if (s.stiffness < 0.0) throw parameter_error("spring stiffness must be >= 0");
      if (s.b != s.a + 1) throw parameter_error("springs must join adjacent sites");
      const bool left_wall = s.a == -1;
      const bool right_wall = s.b == n;
      if ((left_wall || right_wall) && boundary != Boundary::fixed_ends)
        throw parameter_error("wall springs require fixed-end boundary");
      if (!left_wall && (s.a < 0 || s.a >= n))
        throw parameter_error("spring site index out of range");
      if (!right_wall && (s.b < 0 || s.b >= n))
        throw parameter_error("spring site index out of range");
    }
  }
};

/// Uniform chain of n_atoms. Free boundary: n_atoms-1 springs. Fixed ends:
/// two extra wall anchors, n_atoms+1 springs in total.
inline Lattice build_chain(std::size_t n_atoms, double mass, double stiffness,
                           double spacing, Boundary boundary) {
  if (n_atoms < 1) throw parameter_error("n_atoms must be >= 1");
  if (!(mass > 0.0)) throw parameter_error("mass must be > 0");
  if (!(stiffness > 0.0)) throw parameter_error("stiffness must be > 0");
  if (!(spacing > 0.0)) throw parameter_error("spacing must be > 0");

  Lattice l;
  l.boundary = boundary;
  l.spacing = spacing;
  l.masses.assign(n_atoms, mass);
  l.positions.resize(n_atoms);
  for (std::size_t j = 0; j < n_atoms; ++j)
    l.positions[j] = spacing * static_cast<double>(j);
  const int n = static_cast<int>(n_atoms);
  if (boundary == Boundary::fixed_ends) l.springs.push_back({-1, 0, stiffness});
  for (int j = 0; j + 1 < n; ++j) l.springs.push_back({j, j + 1, stiffness});
  if (boundary == Boundary::fixed_ends) l.springs.push_back({n - 1, n, stiffness});
  l.validate();
  return l;
}

/// Concatenates two free chains with one new spring between a's last and
/// b's first atom. The contact bond is created at its rest length (midpoint
/// of the two spacings), so no potential energy is stored at fusion.
inline Lattice merge_lattices(const Lattice& a, const Lattice& b, double joint_stiffness) {
  a.validate();
  b.validate();
  if (a.boundary != Boundary::free_ends || b.boundary != Boundary::free_ends)
    throw unsupported_merge_error("only free-boundary lattices can be merged");
  if (!(joint_stiffness > 0.0)) throw parameter_error("joint_stiffness must be > 0");

  const int na = static_cast<int>(a.size());
  const double gap = 0.5 * (a.spacing + b.spacing);

  Lattice m;
  m.boundary = Boundary::free_ends;
  m.spacing = gap;
  m.masses = a.masses;
  m.masses.insert(m.masses.end(), b.masses.begin(), b.masses.end());
  m.positions = a.positions;
  const double offset = a.positions.back() + gap - b.positions.front();
  for (double x : b.positions) m.positions.push_back(x + offset);
  m.springs = a.springs;
  m.springs.push_back({na - 1, na, joint_stiffness});
  for (const Spring& s : b.springs) m.springs.push_back({s.a + na, s.b + na, s.stiffness});
  m.validate();
  return m;
}

/// Mass-weighted normal modes of a lattice: frequencies ascending and an
/// orthonormal mode matrix whose columns are the eigenvectors of
/// D_jk = K_jk / sqrt(m_j m_k).
struct NormalModeBasis {
  std::vector<double> frequencies;
  Eigen::MatrixXd mode_matrix;
  int zero_mode_count = 0;
  std::vector<double> masses;

  std::size_t size() const { return frequencies.size(); }

  double total_mass() const {
    double m = 0.0;
    for (double mi : masses) m += mi;
    return m;
  }

  double max_frequency() const {
    return frequencies.empty() ? 0.0 : frequencies.back();
  }

  /// Smallest nonzero frequency.
  double min_bound_frequency() const {
    for (double w : frequencies)
      if (w > 0.0) return w;
    return 0.0;
  }
};

/// Stiffness matrix in atom coordinates; wall springs contribute only to
/// the diagonal of the anchored atom.
inline Eigen::MatrixXd stiffness_matrix(const Lattice& l) {
  const int n = static_cast<int>(l.size());
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (const Spring& s : l.springs) {
    const bool left_wall = s.a < 0;
    const bool right_wall = s.b >= n;
    if (!left_wall) k(s.a, s.a) += s.stiffness;
    if (!right_wall) k(s.b, s.b) += s.stiffness;
    if (!left_wall && !right_wall) {
      k(s.a, s.b) -= s.stiffness;
      k(s.b, s.a) -= s.stiffness;
    }
  }
  return k;
}

inline Eigen::MatrixXd dynamical_matrix(const Lattice& l) {
  Eigen::MatrixXd d = stiffness_matrix(l);
  const int n = static_cast<int>(l.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      d(i, j) /= std::sqrt(l.masses[i] * l.masses[j]);
  return d;
}

inline NormalModeBasis normal_modes(const Lattice& l) {
  l.validate();
  const Eigen::MatrixXd d = dynamical_matrix(l);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(d);
  if (solver.info() != Eigen::Success)
    throw instability_error("eigensolver failed to converge");

  const Eigen::VectorXd evals = solver.eigenvalues();
  const double eps = 1e-12 * std::max(evals.cwiseAbs().maxCoeff(), 0.0);

  NormalModeBasis basis;
  basis.masses = l.masses;
  basis.mode_matrix = solver.eigenvectors();
  basis.frequencies.resize(static_cast<std::size_t>(evals.size()));
  for (Eigen::Index i = 0; i < evals.size(); ++i) {
    double lam = evals(i);
    if (lam < -eps)
      throw instability_error("negative dynamical-matrix eigenvalue " + std::to_string(lam));
    if (lam <= eps) {
      basis.frequencies[static_cast<std::size_t>(i)] = 0.0;
      ++basis.zero_mode_count;
    } else {
      basis.frequencies[static_cast<std::size_t>(i)] = std::sqrt(lam);
    }
  }
  return basis;
}

inline nlohmann::ordered_json lattice_to_json(const Lattice& l) {
  nlohmann::ordered_json j;
  j["masses"] = l.masses;
  auto springs = nlohmann::ordered_json::array();
  for (const Spring& s : l.springs)
    springs.push_back(nlohmann::ordered_json::array({s.a, s.b, s.stiffness}));
  j["springs"] = std::move(springs);
  j["positions"] = l.positions;
  j["boundary"] = to_string(l.boundary);
  j["spacing"] = l.spacing;
  return j;
}

inline Lattice lattice_from_json(const nlohmann::json& j) {
  Lattice l;
  try {
    l.masses = j.at("masses").get<std::vector<double>>();
    for (const auto& s : j.at("springs")) {
      if (!s.is_array() || s.size() != 3)
        throw parameter_error("each spring must be [i, j, stiffness]");
      l.springs.push_back({s[0].get<int>(), s[1].get<int>(), s[2].get<double>()});
    }
    l.positions = j.at("positions").get<std::vector<double>>();
    l.boundary = boundary_from_string(j.at("boundary").get<std::string>());
    l.spacing = j.at("spacing").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw parameter_error(std::string("malformed lattice JSON: ") + e.what());
  }
  l.validate();
  return l;
}

}  // namespace thermalize
