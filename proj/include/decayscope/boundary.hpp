#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "decayscope/errors.hpp"
#include "decayscope/kernels.hpp"

namespace decayscope {

enum class BoundaryMethod { nonparametric, parametric };

/// Why no boundary distance was produced.
enum class NoCrossing { none, beyond_grid };

struct MonotonicityDiagnostics {
  double max_positive_increment = 0.0;
  std::size_t increasing_steps = 0;
  std::size_t total_steps = 0;
  double increasing_share() const {
    return total_steps == 0 ? 0.0
                            : static_cast<double>(increasing_steps) /
                                  static_cast<double>(total_steps);
  }
};

/// Distance at which the decay curve falls to epsilon times its source level.
struct BoundaryEstimate {
  double epsilon = 0.5;
  double threshold_level = 0.0;            // epsilon * m_hat at the first grid point
  std::optional<double> d_star;            // absent when the curve never crosses
  std::optional<double> d_star_lower;      // partial-identification interval
  std::optional<double> d_star_upper;
  bool interpolated = false;
  NoCrossing no_crossing = NoCrossing::none;
  std::optional<std::pair<double, double>> ci;
  BoundaryMethod method = BoundaryMethod::nonparametric;
  MonotonicityDiagnostics monotonicity;
};

/// Counts upward steps of the fitted curve; a strictly decreasing curve has none.
inline MonotonicityDiagnostics check_monotonicity(const DecayCurve& curve) {
  curve.validate();
  MonotonicityDiagnostics d;
  d.total_steps = curve.grid.size() - 1;
  for (std::size_t i = 1; i < curve.grid.size(); ++i) {
    const double inc = curve.m_hat[i] - curve.m_hat[i - 1];
    if (inc > 0.0) {
      ++d.increasing_steps;
      d.max_positive_increment = std::max(d.max_positive_increment, inc);
    }
  }
  return d;
}

/// First and last grid points of the sub-threshold set {d : m_hat(d) <= tau}.
/// When the curve is monotone decreasing the interval collapses to the unique
/// crossing, matching the point-identified case.
inline std::optional<std::pair<double, double>> partial_id_bounds(const DecayCurve& curve,
                                                                  double epsilon) {
  curve.validate();
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw InvalidConfigError("epsilon must be in (0, 1)");
  const double tau = epsilon * curve.m_hat.front();
  std::optional<std::size_t> first, last;
  for (std::size_t i = 0; i < curve.grid.size(); ++i) {
    if (curve.m_hat[i] <= tau) {
      if (!first) first = i;
      last = i;
    }
  }
  if (!first) return std::nullopt;
  if (check_monotonicity(curve).increasing_steps == 0)
    return std::make_pair(curve.grid[*first], curve.grid[*first]);
  return std::make_pair(curve.grid[*first], curve.grid[*last]);
}

/// Plug-in boundary: the first grid point where m_hat drops to
/// epsilon * m_hat(d_1), optionally refined by linear interpolation between
/// the bracketing grid points. A curve that never crosses is a reportable
/// "beyond grid" outcome, not an error.
inline BoundaryEstimate estimate_boundary(const DecayCurve& curve, double epsilon,
                                          bool interpolate = true) {
  curve.validate();
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw InvalidConfigError("epsilon must be in (0, 1)");
  const double m0 = curve.m_hat.front();
  if (!(m0 > 0.0))
    throw EstimationError("source level m_hat(d_1) = " + std::to_string(m0) +
                          " is not positive; relative threshold undefined");
  BoundaryEstimate est;
  est.epsilon = epsilon;
  est.threshold_level = epsilon * m0;
  est.method = BoundaryMethod::nonparametric;
  est.monotonicity = check_monotonicity(curve);

  std::optional<std::size_t> crossing;
  for (std::size_t i = 0; i < curve.grid.size(); ++i) {
    if (curve.m_hat[i] <= est.threshold_level) {
      crossing = i;
      break;
    }
  }
  if (!crossing) {
    est.no_crossing = NoCrossing::beyond_grid;
    return est;
  }
  const std::size_t j = *crossing;
  double d = curve.grid[j];
  if (interpolate && j > 0) {
    const double m_lo = curve.m_hat[j - 1];
    const double m_hi = curve.m_hat[j];
    if (m_lo > m_hi)
      d = curve.grid[j - 1] +
          (m_lo - est.threshold_level) / (m_lo - m_hi) * (curve.grid[j] - curve.grid[j - 1]);
    est.interpolated = true;
  }
  est.d_star = d;
  if (est.monotonicity.increasing_steps == 0) {
    est.d_star_lower = d;
    est.d_star_upper = d;
  } else if (const auto bounds = partial_id_bounds(curve, epsilon)) {
    est.d_star_lower = bounds->first;
    est.d_star_upper = bounds->second;
  }
  return est;
}

}  // namespace decayscope
