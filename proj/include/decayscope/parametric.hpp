#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "decayscope/boundary.hpp"
#include "decayscope/errors.hpp"
#include "decayscope/sample.hpp"
#include "decayscope/stats.hpp"

namespace decayscope {

/// Exponential-decay baseline m(d) = A exp(-kappa d), fit by OLS of log Y on D.
struct ExponentialFit {
  double A = 0.0;              // level amplitude, exp(intercept)
  double kappa = 0.0;          // per-km decay rate, minus the log-space slope
  double intercept = 0.0;      // alpha_hat in log space
  double se_kappa_iid = 0.0;
  double r2 = 0.0;             // log-space R^2 (within-R^2 under group FE)
  double r2_level = 0.0;       // level-space R^2, secondary
  std::size_t n_used = 0;
  std::size_t n_dropped_nonpositive = 0;
  bool group_fe = false;

  /// Predicted level at distance d.
  double predict(double d) const { return A * std::exp(-kappa * d); }

  std::vector<double> predict(std::span<const double> ds) const {
    std::vector<double> out(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) out[i] = predict(ds[i]);
    return out;
  }
};

/// OLS of log Y on D. Rows with Y <= 0 are dropped and counted. With group
/// labels, log Y and D are demeaned within groups first, which matches the
/// dummy-variable regression exactly; A then retransforms the grand mean.
inline ExponentialFit fit_exponential(const DistancedSample& sample,
                                      std::span<const std::string> group_labels = {}) {
  sample.validate();
  const bool use_fe = !group_labels.empty();
  if (use_fe && group_labels.size() != sample.n())
    throw InvalidInputError("group labels array does not match the sample length");

  std::vector<double> d, ly;
  std::vector<std::uint32_t> gid;
  std::unordered_map<std::string, std::uint32_t> groups;
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < sample.n(); ++i) {
    const double y = sample.outcomes[i];
    if (!(y > 0.0)) {
      ++dropped;
      continue;
    }
    d.push_back(sample.distances[i]);
    ly.push_back(std::log(y));
    if (use_fe) {
      const auto [it, _] =
          groups.try_emplace(group_labels[i], static_cast<std::uint32_t>(groups.size()));
      gid.push_back(it->second);
    }
  }
  const std::size_t n = d.size();
  if (n == 0) throw DegenerateInputError("all outcomes are non-positive; log fit impossible");
  if (n < 2) throw DegenerateInputError("need at least 2 rows with positive outcome");

  const double d_mean = mean(d);
  const double ly_mean = mean(ly);

  std::vector<double> dx = d, lyx = ly;
  std::size_t n_groups = 1;
  if (use_fe) {
    n_groups = groups.size();
    std::vector<double> gd(n_groups, 0.0), gly(n_groups, 0.0);
    std::vector<std::size_t> gn(n_groups, 0);
    for (std::size_t i = 0; i < n; ++i) {
      gd[gid[i]] += d[i];
      gly[gid[i]] += ly[i];
      ++gn[gid[i]];
    }
    for (std::size_t g = 0; g < n_groups; ++g) {
      gd[g] /= static_cast<double>(gn[g]);
      gly[g] /= static_cast<double>(gn[g]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      dx[i] = d[i] - gd[gid[i]];
      lyx[i] = ly[i] - gly[gid[i]];
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      dx[i] = d[i] - d_mean;
      lyx[i] = ly[i] - ly_mean;
    }
  }

  CompensatedSum sxx, sxy, syy;
  for (std::size_t i = 0; i < n; ++i) {
    sxx.add(dx[i] * dx[i]);
    sxy.add(dx[i] * lyx[i]);
    syy.add(lyx[i] * lyx[i]);
  }
  if (!(sxx.value() > 0.0)) throw DegenerateInputError("distances have zero variance");

  const double slope = sxy.value() / sxx.value();
  ExponentialFit fit;
  fit.kappa = -slope;
  fit.intercept = ly_mean - slope * d_mean;
  fit.A = std::exp(fit.intercept);
  fit.n_used = n;
  fit.n_dropped_nonpositive = dropped;
  fit.group_fe = use_fe;

  CompensatedSum ssr;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = lyx[i] - slope * dx[i];
    ssr.add(e * e);
  }
  const double sst = syy.value();
  fit.r2 = sst > 0.0 ? 1.0 - ssr.value() / sst : 0.0;

  const std::size_t dof = n > n_groups + 1 ? n - n_groups - 1 : 1;
  const double sigma2 = ssr.value() / static_cast<double>(dof);
  fit.se_kappa_iid = std::sqrt(sigma2 / sxx.value());

  // level-space R^2 against the retransformed curve, reported as secondary
  CompensatedSum lvl_ssr, lvl_sst;
  double y_mean = 0.0;
  {
    CompensatedSum ys;
    std::size_t k = 0;
    for (std::size_t i = 0; i < sample.n(); ++i)
      if (sample.outcomes[i] > 0.0) {
        ys.add(sample.outcomes[i]);
        ++k;
      }
    y_mean = ys.value() / static_cast<double>(k);
  }
  for (std::size_t i = 0; i < sample.n(); ++i) {
    const double y = sample.outcomes[i];
    if (!(y > 0.0)) continue;
    const double e = y - fit.predict(sample.distances[i]);
    lvl_ssr.add(e * e);
    const double c = y - y_mean;
    lvl_sst.add(c * c);
  }
  fit.r2_level = lvl_sst.value() > 0.0 ? 1.0 - lvl_ssr.value() / lvl_sst.value() : 0.0;
  return fit;
}

/// Closed-form boundary d* = ln(1/epsilon)/kappa of the exponential baseline.
inline BoundaryEstimate parametric_boundary(const ExponentialFit& fit, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw InvalidConfigError("epsilon must be in (0, 1)");
  if (!(fit.kappa > 0.0))
    throw EstimationError("fitted kappa = " + std::to_string(fit.kappa) +
                          " is not positive; no decay, boundary undefined");
  BoundaryEstimate est;
  est.epsilon = epsilon;
  est.threshold_level = epsilon * fit.A;
  est.method = BoundaryMethod::parametric;
  const double d = std::log(1.0 / epsilon) / fit.kappa;
  est.d_star = d;
  est.d_star_lower = d;
  est.d_star_upper = d;
  return est;
}

inline double predict(const ExponentialFit& fit, double d) { return fit.predict(d); }

inline std::vector<double> predict(const ExponentialFit& fit, std::span<const double> ds) {
  return fit.predict(ds);
}

}  // namespace decayscope
