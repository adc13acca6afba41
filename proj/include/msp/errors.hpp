#pragma once

#include <stdexcept>
#include <string>

namespace msp {

/// Malformed, truncated, or version-mismatched input files.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values where the computation cannot continue (diverged loss,
/// NaN gradients).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace msp
