#pragma once

#include <stdexcept>
#include <string>

namespace lipnet {

// All library failures derive from Error so callers (the CLI in particular)
// can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor extents.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf values, diverging losses.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Inconsistent model or training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing or corrupt dataset files, unknown splits.
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed checkpoint files or checkpoint/network mismatch.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace lipnet
