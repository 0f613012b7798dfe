#pragma once

#include <stdexcept>
#include <string>

namespace densctl {

/// Numerical routine failed to converge or produced non-finite values.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input data cannot support the requested operation (too few samples,
/// rank deficiency, zero variance, missing excitation).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A component returned something outside its contract.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace densctl
