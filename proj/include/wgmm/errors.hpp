#pragma once

#include <stdexcept>
#include <string>

namespace wgmm {

// Error categories map onto the CLI exit codes (2 config, 3 data, 4 numerical).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sigma-hat is singular and no ridge was allowed.
class DegenerateCovariance : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace wgmm
