#pragma once

#include <stdexcept>
#include <string>

namespace rwre {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operation asked outside its mathematical domain (divergent integral,
/// radius exceeded, uncalibrated spec).
struct DomainError : Error {
  using Error::Error;
};

/// Operation refuses the spec because a hypothesis it relies on fails
/// (lattice law for local limits, ellipticity off for constant-dependent bounds).
struct RefusedError : Error {
  using Error::Error;
};

/// Node budget or enumeration budget exceeded.
struct CapacityError : Error {
  using Error::Error;
};

/// Subtree or generation needed by a query has not been materialized.
struct NotGrownError : Error {
  using Error::Error;
};

struct ConvergenceError : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

}  // namespace rwre
