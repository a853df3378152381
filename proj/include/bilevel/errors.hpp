#pragma once

#include <stdexcept>
#include <string>

namespace bilevel {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A composite-prox strategy was used with oracles that lack the structure
/// the strategy assumes (e.g. G1QuadraticScaling without a quadratic g1).
struct StrategyMismatch : Error {
  using Error::Error;
};

/// A gradient oracle returned NaN/Inf components.
struct NonFiniteGradient : Error {
  using Error::Error;
};

/// Consecutive iterates coincide; local moduli are undefined. Only thrown in
/// strict mode, the default path returns zero moduli instead.
struct DegenerateStep : Error {
  using Error::Error;
};

/// The radicand of the stepsize initializer went negative, which signals a
/// broken precondition upstream (penalty box or linesearch postcondition).
struct RadicandViolation : Error {
  using Error::Error;
};

/// The linesearch exhausted its trial budget without acceptance.
struct BacktrackLimit : Error {
  using Error::Error;
};

struct ParseError : Error {
  ParseError(const std::string& what, long long line)
      : Error("parse error at line " + std::to_string(line) + ": " + what),
        line_number(line) {}
  long long line_number;
};

struct DimensionError : Error {
  using Error::Error;
};

struct UnsupportedKind : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

}  // namespace bilevel
