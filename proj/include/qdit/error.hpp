#pragma once

#include <stdexcept>
#include <string>

namespace qdit {

// Base class for everything this library throws on purpose.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or rank mismatch between tensors.
struct dim_error : error {
  using error::error;
};

// Input violates a documented precondition (non-finite data, out-of-range
// code, asymmetric matrix, ...).
struct validation_error : error {
  using error::error;
};

// An iterative algorithm ran out of its iteration budget.
struct convergence_error : error {
  using error::error;
};

// Input is outside the mathematical domain of the operation
// (not positive definite, materially negative eigenvalue, ...).
struct domain_error : error {
  using error::error;
};

// Bad run configuration: unknown key, unparsable value, invalid combination.
// The CLI maps this to exit code 2.
struct config_error : error {
  using error::error;
};

// File could not be read/written or has a malformed layout.
struct io_error : error {
  using error::error;
};

}  // namespace qdit
