#pragma once

#include <stdexcept>
#include <string>

namespace retcap {

/// Invalid parameters or inputs outside an operation's domain.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed: no bracket, no convergence, inadmissible candidate.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A series or continued fraction did not reach tolerance within its term cap.
class ConvergenceError : public SolverError {
 public:
  using SolverError::SolverError;
};

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace retcap
