#pragma once

#include <stdexcept>
#include <string>

namespace decayscope {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or out-of-domain input data (bad coordinates, NaN outcomes, broken files).
class InvalidInputError : public Error {
public:
  using Error::Error;
};

/// A configuration value violates its contract (empty source set, epsilon out of (0,1), ...).
class InvalidConfigError : public Error {
public:
  using Error::Error;
};

/// Input is formally valid but statistically unusable (n too small, zero variance, all Y <= 0).
class DegenerateInputError : public Error {
public:
  using Error::Error;
};

/// Local design matrix is rank deficient at a fit point.
class SingularFitError : public Error {
public:
  SingularFitError(const std::string& what, double at_distance_km)
      : Error(what), d0(at_distance_km) {}
  double d0;
};

/// Estimation cannot proceed (non-positive source level, no decay, flat crossing).
class EstimationError : public Error {
public:
  using Error::Error;
};

}  // namespace decayscope
