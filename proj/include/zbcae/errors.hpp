#pragma once

#include <stdexcept>
#include <string>

namespace zbcae {

// Base of every error thrown by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents that do not line up (channel counts, kernel sizes, ...).
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed container, manifest or configuration file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A file that cannot be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or objective.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Invalid argument values supplied by a caller (bad config values, bad flags).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace zbcae
