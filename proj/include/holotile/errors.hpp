#pragma once

#include <stdexcept>
#include <string>

namespace holotile {

// Every error raised by the library derives from Error so callers (the CLI in
// particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

/// Shapes or channel counts that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "dimension"; }
};

/// A value outside the mathematical domain of an operation (negative
/// amplitude, non-positive wavelength, ...).
class DomainError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "domain"; }
};

/// Inconsistent or invalid configuration, including config-file schema errors.
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

/// API misuse, e.g. calling backward on a non-scalar tensor.
class UsageError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "usage"; }
};

/// The operation refuses to run because the request is unreasonably large.
class RefusalError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "refusal"; }
};

}  // namespace holotile
