#pragma once

#include <stdexcept>
#include <string>

namespace logspline {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition violated by caller-supplied data or parameters.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A computation left the finite floating-point domain (overflow, log of zero, ...).
class NumericDomain : public Error {
 public:
  using Error::Error;
};

/// A configured size cap was exceeded.
class ResourceError : public Error {
 public:
  ResourceError(const std::string& what, double count) : Error(what), count_(count) {}
  double count() const noexcept { return count_; }

 private:
  double count_;
};

/// An object was queried in a state that does not support the request.
class InvalidState : public Error {
 public:
  using Error::Error;
};

/// MCMC diagnostics failure (e.g. no accepted proposal in an adaptation window).
class DiagnosticsError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace logspline
