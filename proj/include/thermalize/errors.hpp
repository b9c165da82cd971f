#pragma once

#include <stdexcept>
#include <string>

namespace thermalize {

/// Base class for all library errors.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition.
class parameter_error : public error {
 public:
  using error::error;
};

/// Attempt to fuse lattices that cannot be fused (e.g. fixed-end walls).
class unsupported_merge_error : public error {
 public:
  using error::error;
};

/// Dynamical matrix has a genuinely negative eigenvalue.
class instability_error : public error {
 public:
  using error::error;
};

/// Requested evolution target lies in the past of the state.
class time_ordering_error : public error {
 public:
  using error::error;
};

/// State is outside the class an operation supports (e.g. squeezed mode
/// passed to a coherent-only diagnostic).
class unsupported_state_error : public error {
 public:
  using error::error;
};

/// Level-density window contains zero or non-monotone counts.
class ill_conditioned_density_error : public error {
 public:
  using error::error;
};

/// No microstates in the requested energy window.
class empty_ensemble_error : public error {
 public:
  using error::error;
};

/// Requested energy lies outside the tabulated matter spectrum.
class boundary_error : public error {
 public:
  using error::error;
};

/// Occupancy-space truncation leaves too much probability mass outside.
class truncation_error : public error {
 public:
  using error::error;
};

/// Trajectory too short for the requested statistic.
class insufficient_statistics_error : public error {
 public:
  using error::error;
};

/// Time step too large for the stiffest interaction.
class stability_error : public error {
 public:
  using error::error;
};

/// Malformed experiment configuration.
class config_error : public error {
 public:
  explicit config_error(const std::string& field, const std::string& message)
      : error("config field '" + field + "': " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace thermalize
