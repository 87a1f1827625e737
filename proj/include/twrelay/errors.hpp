#pragma once

#include <stdexcept>
#include <string>

namespace twrelay {

// Error taxonomy shared by every module. Library code only ever throws one
// of these, so callers can map failure modes without string matching.

// Shape or antenna-count mismatch.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A matrix required to be Hermitian positive (semi)definite is not.
struct DefinitenessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input is rank deficient or too ill conditioned to factor reliably.
struct IllConditionedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A power budget leaves no feasible point.
struct InfeasibleBudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A numerical routine failed to reach its tolerance.
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad run configuration (CLI, config file, or cross-field rule).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A file could not be written or renamed.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace twrelay
