#pragma once

#include <stdexcept>
#include <string>

namespace scenreach {

/// Bad arguments: dimension mismatches, out-of-range parameters, malformed data.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A request that is well-formed but refused by configuration limits
/// (vertex blow-up, memory guard, disabled modes).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative numerics that did not converge (root bracketing, solver failure).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Files that cannot be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace scenreach
