#pragma once

#include <stdexcept>
#include <string>

namespace entlab {

/// Bad grid / kernel / run configuration.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Array length does not match the grid it is paired with.
struct DimensionError : std::invalid_argument {
  explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Moment inversion produced rho <= 0 or theta <= 0.
struct DegenerateMomentsError : std::runtime_error {
  explicit DegenerateMomentsError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A reconstructed number density stopped being positive.
struct PositivityError : std::runtime_error {
  explicit PositivityError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Spatial field failed the spectral-tail smoothness check.
struct NonSmoothFieldError : std::runtime_error {
  explicit NonSmoothFieldError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Time step outside the advective CFL bound.
struct CflError : std::invalid_argument {
  explicit CflError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Iterative solver did not reach its tolerance.
struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace entlab
