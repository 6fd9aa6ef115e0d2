/// @file  common.hpp
/// @brief Error taxonomy and shared numeric constants.

#pragma once

#include <stdexcept>
#include <string>

namespace mvml {

inline constexpr const char* kVersion = "0.1.0";

/// Validation tolerance for "PSD within tolerance" checks: a symmetric
/// matrix is accepted when its smallest eigenvalue is >= -kPsdTol.
/// Enforcement (projection) clamps strictly negative eigenvalues to zero;
/// validation is deliberately looser than enforcement.
inline constexpr double kPsdTol = 1e-9;

/// Maximum absolute asymmetry accepted by LocalMetric validation.
inline constexpr double kSymTol = 1e-9;

/// Mismatched or invalid matrix/vector dimensions.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration or arguments (maps to usage errors in the CLI).
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data (files, indices, empty views).
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure: non-finite values, matrices non-PSD beyond
/// tolerance, degenerate scales.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Training objective blow-up; carries the outer iteration it happened at.
class DivergedError : public NumericError {
public:
  DivergedError(const std::string& msg, int iteration)
      : NumericError(msg), iteration(iteration) {}
  int iteration;
};

}  // namespace mvml
