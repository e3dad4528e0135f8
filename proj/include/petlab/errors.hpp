#pragma once

#include <stdexcept>
#include <string>

namespace petlab {

/// Base of every error thrown by the library. The CLI maps the concrete
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit an operation.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Invalid configuration values (exit code 1).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Missing, malformed or degenerate input data (exit code 2).
class DataError : public Error {
public:
  using Error::Error;
};

/// An object used in a state that does not support the call.
class StateError : public Error {
public:
  using Error::Error;
};

/// Violated API precondition, e.g. backward() on a non-scalar.
class ContractError : public Error {
public:
  using Error::Error;
};

/// Numerical failure during a long-running computation (exit code 3).
class RuntimeFailure : public Error {
public:
  using Error::Error;
};

} // namespace petlab
