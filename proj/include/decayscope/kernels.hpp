#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "decayscope/errors.hpp"
#include "decayscope/parallel.hpp"
#include "decayscope/sample.hpp"
#include "decayscope/stats.hpp"

namespace decayscope {

enum class KernelFamily { Epanechnikov, Gaussian, Uniform };

/// Kernel with its second moment mu2 = int u^2 K(u) du and roughness
/// nu0 = int K(u)^2 du, the constants the asymptotic formulas need.
struct KernelSpec {
  KernelFamily family = KernelFamily::Epanechnikov;
  double mu2 = 0.2;
  double nu0 = 0.6;
  bool compact_support = true;

  double operator()(double u) const {
    switch (family) {
      case KernelFamily::Epanechnikov:
        return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
      case KernelFamily::Uniform:
        return std::abs(u) <= 1.0 ? 0.5 : 0.0;
      case KernelFamily::Gaussian:
        // evaluated on the full real line, no truncation
        return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
    }
    return 0.0;
  }

  static KernelSpec epanechnikov() { return {KernelFamily::Epanechnikov, 0.2, 0.6, true}; }
  static KernelSpec uniform() { return {KernelFamily::Uniform, 1.0 / 3.0, 0.5, true}; }
  static KernelSpec gaussian() {
    return {KernelFamily::Gaussian, 1.0, 1.0 / (2.0 * std::sqrt(std::numbers::pi)), false};
  }

  static KernelSpec from_name(const std::string& name) {
    if (name == "epanechnikov" || name == "epa") return epanechnikov();
    if (name == "gaussian" || name == "gauss") return gaussian();
    if (name == "uniform") return uniform();
    throw InvalidConfigError("unknown kernel '" + name + "'");
  }

  const char* name() const {
    switch (family) {
      case KernelFamily::Epanechnikov: return "epanechnikov";
      case KernelFamily::Gaussian: return "gaussian";
      case KernelFamily::Uniform: return "uniform";
    }
    return "?";
  }
};

enum class BandwidthMethod { silverman, cross_validation, fixed };

struct Bandwidth {
  double h = 0.0;  // km
  BandwidthMethod method = BandwidthMethod::fixed;
};

inline const char* bandwidth_method_name(BandwidthMethod m) {
  switch (m) {
    case BandwidthMethod::silverman: return "silverman";
    case BandwidthMethod::cross_validation: return "cross_validation";
    case BandwidthMethod::fixed: return "fixed";
  }
  return "?";
}

/// Rule-of-thumb bandwidth h = 1.06 sd(D) n^{-1/5}.
inline Bandwidth silverman_bandwidth(const DistancedSample& sample) {
  if (sample.n() < 2) throw DegenerateInputError("silverman bandwidth needs n >= 2");
  const double sd = sample_sd(sample.distances);
  if (!(sd > 0.0)) throw DegenerateInputError("distances have zero variance");
  const double h = 1.06 * sd * std::pow(static_cast<double>(sample.n()), -0.2);
  return {h, BandwidthMethod::silverman};
}

struct LocalFit {
  std::array<double, 3> beta{};  // beta[j] estimates m^(j)(d0) * j!
  int order = 1;
  double effective_n = 0.0;  // Kish effective count of the kernel weights
};

namespace detail {

/// Weighted polynomial fit in the scaled basis ((d - d0)/h)^j. Weights are
/// normalized to sum 1, a 1e-8 ridge stabilizes the Cholesky factorization,
/// and one iterative-refinement step against the unjittered moments removes
/// the ridge's bias, so exact polynomial data is reproduced to ~1e-12.
inline constexpr double kNormalMatrixJitter = 1e-8;

template <int P1>
inline bool cholesky_solve(std::array<std::array<double, 3>, 3>& a, std::array<double, 3>& b) {
  for (int j = 0; j < P1; ++j) {
    double d = a[j][j];
    for (int k = 0; k < j; ++k) d -= a[j][k] * a[j][k];
    if (!(d > 0.0)) return false;
    a[j][j] = std::sqrt(d);
    for (int i = j + 1; i < P1; ++i) {
      double s = a[i][j];
      for (int k = 0; k < j; ++k) s -= a[i][k] * a[j][k];
      a[i][j] = s / a[j][j];
    }
  }
  for (int i = 0; i < P1; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= a[i][k] * b[k];
    b[i] = s / a[i][i];
  }
  for (int i = P1 - 1; i >= 0; --i) {
    double s = b[i];
    for (int k = i + 1; k < P1; ++k) s -= a[k][i] * b[k];
    b[i] = s / a[i][i];
  }
  return true;
}

struct WindowSums {
  std::array<double, 5> moments{};  // sum w u^j, j = 0..2p
  std::array<double, 3> rhs{};      // sum w u^j y
  double weight_total = 0.0;
  double weight_sq_total = 0.0;
  std::size_t distinct = 0;
  double f_hat_raw = 0.0;  // sum K((d_i - d0)/h), for the kernel density
};

inline WindowSums accumulate_window(const SortedSample& s, double d0, double h,
                                    const KernelSpec& kernel, int p) {
  WindowSums ws;
  std::size_t i0 = 0, i1 = s.n();
  if (kernel.compact_support) {
    i0 = std::lower_bound(s.distances.begin(), s.distances.end(), d0 - h) - s.distances.begin();
    i1 = std::upper_bound(s.distances.begin(), s.distances.end(), d0 + h) - s.distances.begin();
  }
  double last_d = 0.0;
  for (std::size_t i = i0; i < i1; ++i) {
    const double u = (s.distances[i] - d0) / h;
    const double w = kernel(u);
    if (!(w > 0.0)) continue;
    ws.f_hat_raw += w;
    if (ws.distinct == 0 || s.distances[i] != last_d) {
      ++ws.distinct;
      last_d = s.distances[i];
    }
    ws.weight_total += w;
    ws.weight_sq_total += w * w;
    const double y = s.outcomes[i];
    double uj = w;
    ws.moments[0] += uj;
    ws.rhs[0] += uj * y;
    for (int j = 1; j <= 2 * p; ++j) {
      uj *= u;
      ws.moments[static_cast<std::size_t>(j)] += uj;
      if (j <= p) ws.rhs[static_cast<std::size_t>(j)] += uj * y;
    }
  }
  return ws;
}

inline std::optional<LocalFit> solve_local_fit(const WindowSums& ws, double h, int p) {
  const std::size_t p1 = static_cast<std::size_t>(p) + 1;
  if (ws.distinct < p1) return std::nullopt;
  std::array<std::array<double, 3>, 3> m{}, s{};
  std::array<double, 3> c{};
  for (std::size_t j = 0; j < p1; ++j) {
    c[j] = ws.rhs[j] / ws.weight_total;
    for (std::size_t k = 0; k < p1; ++k) m[j][k] = ws.moments[j + k] / ws.weight_total;
  }
  s = m;
  for (std::size_t j = 0; j < p1; ++j) s[j][j] += kNormalMatrixJitter;
  std::array<double, 3> gamma = c;
  auto chol = s;
  bool ok = p == 0   ? cholesky_solve<1>(chol, gamma)
            : p == 1 ? cholesky_solve<2>(chol, gamma)
                     : cholesky_solve<3>(chol, gamma);
  if (!ok) return std::nullopt;
  std::array<double, 3> resid{};
  for (std::size_t j = 0; j < p1; ++j) {
    resid[j] = c[j];
    for (std::size_t k = 0; k < p1; ++k) resid[j] -= m[j][k] * gamma[k];
  }
  // re-solve with the existing factor (stored in chol)
  for (std::size_t i = 0; i < p1; ++i) {
    double v = resid[i];
    for (std::size_t k = 0; k < i; ++k) v -= chol[i][k] * resid[k];
    resid[i] = v / chol[i][i];
  }
  for (std::size_t i = p1; i-- > 0;) {
    double v = resid[i];
    for (std::size_t k = i + 1; k < p1; ++k) v -= chol[k][i] * resid[k];
    resid[i] = v / chol[i][i];
  }
  LocalFit fit;
  fit.order = p;
  double hj = 1.0;
  for (std::size_t j = 0; j < p1; ++j) {
    fit.beta[j] = (gamma[j] + resid[j]) / hj;
    hj *= h;
  }
  fit.effective_n = ws.weight_total * ws.weight_total / ws.weight_sq_total;
  return fit;
}

}  // namespace detail

/// Local polynomial fit at d0: beta[0] estimates m(d0), beta[1] estimates m'(d0).
inline LocalFit local_poly_fit(const SortedSample& sample, double d0, double h,
                               const KernelSpec& kernel, int p) {
  if (p < 0 || p > 2) throw InvalidConfigError("polynomial order must be 0, 1 or 2");
  if (!(h > 0.0)) throw InvalidConfigError("bandwidth must be positive");
  const auto ws = detail::accumulate_window(sample, d0, h, kernel, p);
  const auto fit = detail::solve_local_fit(ws, h, p);
  if (!fit)
    throw SingularFitError("rank-deficient local design at d = " + std::to_string(d0) + " km (" +
                               std::to_string(ws.distinct) + " distinct distances, order " +
                               std::to_string(p) + ")",
                           d0);
  return *fit;
}

inline LocalFit local_poly_fit(const DistancedSample& sample, double d0, const Bandwidth& h,
                               const KernelSpec& kernel, int p) {
  return local_poly_fit(SortedSample::from(sample), d0, h.h, kernel, p);
}

struct GridSpec {
  double d_min = 0.0;
  double d_max = 100.0;
  std::size_t points = 101;

  std::vector<double> make() const {
    if (!(d_max > d_min) || points < 2) throw InvalidConfigError("invalid evaluation grid");
    std::vector<double> g(points);
    const double step = (d_max - d_min) / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) g[i] = d_min + step * static_cast<double>(i);
    return g;
  }

  /// 1 km spacing from 0 to d_max.
  static GridSpec default_for(double d_max) {
    const auto n = static_cast<std::size_t>(std::llround(std::ceil(d_max)));
    return {0.0, static_cast<double>(n), n + 1};
  }
};

/// What fit_decay_curve does at grid points where the local design is singular.
enum class SingularPolicy { error, interpolate };

struct CurveOptions {
  SingularPolicy on_singular = SingularPolicy::error;
  bool with_density = true;
  bool with_variance = true;
};

/// The estimated decay function on a distance grid.
struct DecayCurve {
  std::vector<double> grid;
  std::vector<double> m_hat;        // local intercepts
  std::vector<double> m_prime_hat;  // local slopes (NaN for p = 0)
  std::vector<double> f_hat;        // kernel density of D
  std::vector<double> sigma2_hat;   // local residual variance
  Bandwidth h;
  KernelSpec kernel;
  int order = 1;
  std::size_t n = 0;

  void validate() const {
    const std::size_t g = grid.size();
    if (g < 2) throw InvalidConfigError("decay curve needs at least 2 grid points");
    if (m_hat.size() != g || m_prime_hat.size() != g || f_hat.size() != g ||
        sigma2_hat.size() != g)
      throw InvalidConfigError("decay curve arrays have mismatched lengths");
    for (std::size_t i = 1; i < g; ++i)
      if (!(grid[i] > grid[i - 1])) throw InvalidConfigError("grid must be strictly increasing");
    for (double f : f_hat)
      if (f < 0.0) throw InvalidConfigError("kernel density must be non-negative");
  }

  double value_at(double d) const { return interp_on_grid(grid, m_hat, d); }
  double slope_at(double d) const { return interp_on_grid(grid, m_prime_hat, d); }
  double density_at(double d) const { return interp_on_grid(grid, f_hat, d); }
  double variance_at(double d) const { return interp_on_grid(grid, sigma2_hat, d); }
};

inline DecayCurve fit_decay_curve(const SortedSample& sorted, const GridSpec& grid_spec,
                                  const Bandwidth& bw, const KernelSpec& kernel, int p,
                                  const CurveOptions& options = {}) {
  if (p < 0 || p > 2) throw InvalidConfigError("polynomial order must be 0, 1 or 2");
  if (!(bw.h > 0.0)) throw InvalidConfigError("bandwidth must be positive");
  DecayCurve curve;
  curve.grid = grid_spec.make();
  curve.h = bw;
  curve.kernel = kernel;
  curve.order = p;
  curve.n = sorted.n();
  const std::size_t g = curve.grid.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  curve.m_hat.assign(g, nan);
  curve.m_prime_hat.assign(g, nan);
  curve.f_hat.assign(g, 0.0);
  curve.sigma2_hat.assign(g, 0.0);
  std::vector<char> usable(g, 1);

  const double inv_nh = 1.0 / (static_cast<double>(sorted.n()) * bw.h);
  parallel_for_blocks(g, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto ws = detail::accumulate_window(sorted, curve.grid[i], bw.h, kernel, p);
      if (options.with_density) curve.f_hat[i] = ws.f_hat_raw * inv_nh;
      const auto fit = detail::solve_local_fit(ws, bw.h, p);
      if (!fit) {
        if (options.on_singular == SingularPolicy::error)
          throw SingularFitError("rank-deficient local design at grid point " +
                                     std::to_string(i) + " (d = " +
                                     std::to_string(curve.grid[i]) + " km)",
                                 curve.grid[i]);
        usable[i] = 0;
        continue;
      }
      curve.m_hat[i] = fit->beta[0];
      if (p >= 1) curve.m_prime_hat[i] = fit->beta[1];
    }
  });

  if (options.on_singular == SingularPolicy::interpolate) {
    auto patch = [&](std::vector<double>& a) {
      for (std::size_t i = 0; i < g; ++i) {
        if (usable[i]) continue;
        std::size_t lo = i, hi = i;
        while (lo > 0 && !usable[lo]) --lo;
        while (hi + 1 < g && !usable[hi]) ++hi;
        if (usable[lo] && usable[hi] && lo != hi) {
          const double t = (curve.grid[i] - curve.grid[lo]) / (curve.grid[hi] - curve.grid[lo]);
          a[i] = a[lo] * (1.0 - t) + a[hi] * t;
        } else if (usable[lo]) {
          a[i] = a[lo];
        } else if (usable[hi]) {
          a[i] = a[hi];
        }
      }
    };
    patch(curve.m_hat);
    if (p >= 1) patch(curve.m_prime_hat);
  }

  if (options.with_variance) {
    // Nadaraya-Watson smooth of squared residuals against the fitted curve,
    // same bandwidth and kernel.
    std::vector<double> sq_resid(sorted.n());
    parallel_for_blocks(sorted.n(), [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const double r = sorted.outcomes[i] - curve.value_at(sorted.distances[i]);
        sq_resid[i] = r * r;
      }
    });
    SortedSample resid_sample;
    resid_sample.distances = sorted.distances;
    resid_sample.outcomes = std::move(sq_resid);
    parallel_for_blocks(g, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto ws = detail::accumulate_window(resid_sample, curve.grid[i], bw.h, kernel, 0);
        curve.sigma2_hat[i] = ws.weight_total > 0.0 ? ws.rhs[0] / ws.weight_total : 0.0;
      }
    });
  }

  curve.validate();
  return curve;
}

inline DecayCurve fit_decay_curve(const DistancedSample& sample, const GridSpec& grid_spec,
                                  const Bandwidth& bw, const KernelSpec& kernel, int p,
                                  const CurveOptions& options = {}) {
  return fit_decay_curve(SortedSample::from(sample), grid_spec, bw, kernel, p, options);
}

/// K-fold cross-validation over a candidate bandwidth list. Folds interleave
/// over the distance-sorted order; out-of-fold predictions come from the
/// fitted curve interpolated at the held-out distances. Ties prefer the
/// larger (smoother) bandwidth.
inline Bandwidth cv_bandwidth(const DistancedSample& sample, std::span<const double> candidate_hs,
                              const KernelSpec& kernel, int p, std::size_t folds) {
  if (candidate_hs.empty()) throw InvalidConfigError("cv_bandwidth needs at least one candidate");
  for (double h : candidate_hs)
    if (!(h > 0.0)) throw InvalidConfigError("candidate bandwidths must be positive");
  if (candidate_hs.size() == 1) return {candidate_hs[0], BandwidthMethod::cross_validation};
  if (folds < 2) throw InvalidConfigError("cv_bandwidth needs folds >= 2");

  const SortedSample sorted = SortedSample::from(sample);
  if (sorted.n() < folds) throw DegenerateInputError("fewer observations than folds");
  const GridSpec grid_spec = GridSpec::default_for(sorted.d_max);
  CurveOptions lean;
  lean.with_density = false;
  lean.with_variance = false;

  std::vector<double> hs(candidate_hs.begin(), candidate_hs.end());
  std::sort(hs.begin(), hs.end());
  double best_h = 0.0;
  double best_score = std::numeric_limits<double>::infinity();
  std::size_t singular_candidates = 0;

  for (double h : hs) {
    CompensatedSum sse;
    std::size_t tested = 0;
    bool singular = false;
    for (std::size_t fold = 0; fold < folds && !singular; ++fold) {
      SortedSample train;
      train.d_max = sorted.d_max;
      train.distances.reserve(sorted.n());
      train.outcomes.reserve(sorted.n());
      for (std::size_t i = 0; i < sorted.n(); ++i) {
        if (i % folds == fold) continue;
        train.distances.push_back(sorted.distances[i]);
        train.outcomes.push_back(sorted.outcomes[i]);
      }
      try {
        const DecayCurve curve =
            fit_decay_curve(train, grid_spec, {h, BandwidthMethod::fixed}, kernel, p, lean);
        for (std::size_t i = fold; i < sorted.n(); i += folds) {
          const double e = sorted.outcomes[i] - curve.value_at(sorted.distances[i]);
          sse.add(e * e);
          ++tested;
        }
      } catch (const SingularFitError&) {
        singular = true;
      }
    }
    if (singular || tested == 0) {
      ++singular_candidates;
      continue;
    }
    const double score = sse.value() / static_cast<double>(tested);
    if (score <= best_score) {  // ties go to the larger h; hs is ascending
      best_score = score;
      best_h = h;
    }
  }
  if (singular_candidates == hs.size())
    throw EstimationError("every candidate bandwidth produced a singular fit");
  return {best_h, BandwidthMethod::cross_validation};
}

}  // namespace decayscope
