#pragma once

#include <stdexcept>
#include <string>

namespace mnemo {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller supplied an argument outside the operation's contract.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A value outside the mathematical domain of a transform.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An operation was invoked in a state that does not allow it.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed or invariant-violating input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// The sampler could not produce a usable starting point.
class InitializationError : public Error {
 public:
  using Error::Error;
};

/// A chain diverged too often to be trusted.
class SamplingError : public Error {
 public:
  using Error::Error;
};

/// Convergence diagnostics were requested on unusable input.
class DiagnosticError : public Error {
 public:
  using Error::Error;
};

/// Lookup of an identifier that does not exist.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace mnemo
