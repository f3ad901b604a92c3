#pragma once

#include <stdexcept>
#include <string>

namespace rt {

// Invalid reaction tableau: bad block structure, rank deficiency, ...
class TableauError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mesh or operator assembly problem (non-positive widths, CFL violation, ...).
class AssemblyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration file / CLI argument problem.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A sub-solve embedded in a residual evaluation diverged (e.g. cell
// chemistry inside a coupled residual).  Newton drivers treat this as
// "reject the candidate point", not as a fatal error.
class EvalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A time step (or whole simulation) failed after all retries.
class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rt
