#pragma once

#include <stdexcept>
#include <string>

namespace laic {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: malformed config, out-of-range hyperparameters, unknown keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The file on disk does not follow the LAICFTR1 or CSV layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace laic
