#pragma once

#include <stdexcept>
#include <string>

namespace qcd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments, malformed distributions, bad configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input files. Message carries the file and line/record.
class ParseError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Failures from a next-token or embedding backend (I/O, HTTP, protocol).
class BackendError : public Error {
 public:
  using Error::Error;
};

}  // namespace qcd
