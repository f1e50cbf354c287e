#pragma once

#include <stdexcept>
#include <string>

namespace cohesim {

/// Argument outside the mathematical domain of an operation
/// (non-SPD tensor, nonpositive Jacobian, negative time step, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Kinematic state outside the model's range of validity, e.g. a jump
/// that would invert the cell volume.
class InadmissibleState : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative solve stopped without reaching tolerance.
class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, int iterations, double residual)
      : std::runtime_error(what), iterations(iterations), residual(residual) {}

  int iterations = 0;
  double residual = 0.0;
};

/// Particle packing could not satisfy the requested geometry.
class PackingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A time budget ran out: a simulated transport message never arrived, or a
/// build exceeded its wall-clock allowance.
class DeadlineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cohesim
