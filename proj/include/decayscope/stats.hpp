#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "decayscope/errors.hpp"

namespace decayscope {

/// Neumaier compensated accumulator.
class CompensatedSum {
public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_total(std::span<const double> xs) {
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value();
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw DegenerateInputError("mean of empty array");
  return compensated_total(xs) / static_cast<double>(xs.size());
}

/// Sample standard deviation (ddof = 1), two-pass.
inline double sample_sd(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 2) throw DegenerateInputError("sample sd needs n >= 2");
  const double m = mean(xs);
  CompensatedSum ss;
  for (double x : xs) {
    const double d = x - m;
    ss.add(d * d);
  }
  return std::sqrt(ss.value() / static_cast<double>(n - 1));
}

/// Empirical quantile with linear interpolation between order statistics
/// (index q*(n-1), the numpy default). Input must already be sorted.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DegenerateInputError("quantile of empty array");
  if (q <= 0.0) return sorted.front();
  if (q >= 1.0) return sorted.back();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

/// Piecewise-linear interpolation of ys over a strictly increasing grid,
/// clamped to the end values outside the grid.
inline double interp_on_grid(std::span<const double> grid, std::span<const double> ys, double x) {
  if (grid.empty() || grid.size() != ys.size())
    throw InvalidConfigError("interp_on_grid: grid/values size mismatch");
  if (x <= grid.front()) return ys.front();
  if (x >= grid.back()) return ys.back();
  const auto it = std::upper_bound(grid.begin(), grid.end(), x);
  const std::size_t j = static_cast<std::size_t>(it - grid.begin());
  const double t = (x - grid[j - 1]) / (grid[j] - grid[j - 1]);
  return ys[j - 1] * (1.0 - t) + ys[j] * t;
}

/// Trapezoid rule over a (possibly non-uniform) grid.
inline double trapezoid(std::span<const double> grid, std::span<const double> ys) {
  if (grid.size() != ys.size() || grid.size() < 2)
    throw InvalidConfigError("trapezoid: need matching arrays of length >= 2");
  CompensatedSum s;
  for (std::size_t i = 1; i < grid.size(); ++i)
    s.add(0.5 * (ys[i] + ys[i - 1]) * (grid[i] - grid[i - 1]));
  return s.value();
}

/// Standard normal quantile. Acklam's rational approximation polished with one
/// Halley step against erfc, giving near machine precision over (0, 1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidConfigError("normal_quantile: p must be in (0,1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  static constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

}  // namespace decayscope
