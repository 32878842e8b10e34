#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "decayscope/boundary.hpp"
#include "decayscope/errors.hpp"
#include "decayscope/geo.hpp"
#include "decayscope/kernels.hpp"
#include "decayscope/parallel.hpp"
#include "decayscope/parametric.hpp"
#include "decayscope/rng.hpp"
#include "decayscope/sample.hpp"
#include "decayscope/stats.hpp"

namespace decayscope {

struct BootstrapConfig {
  std::size_t B = 50;
  std::size_t n_b = 50000;  // subsample size, drawn with replacement
  std::uint64_t seed = 0;
  double alpha = 0.05;
  bool allow_small_b = false;  // override the B >= 20 practicality floor

  void validate() const {
    if (B < 2) throw InvalidConfigError("bootstrap needs B >= 2");
    if (B < 20 && !allow_small_b)
      throw InvalidConfigError("B < 20 gives degenerate quantiles; set allow_small_b to force");
    if (n_b < 100) throw InvalidConfigError("subsample size n_b must be >= 100");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidConfigError("alpha must be in (0, 1)");
  }
};

/// Everything needed to recompute the boundary on a (re)sample.
struct BoundaryPipelineConfig {
  GridSpec grid = GridSpec::default_for(100.0);
  KernelSpec kernel = KernelSpec::epanechnikov();
  int order = 1;
  double epsilon = 0.5;
  bool interpolate = true;
  std::optional<double> fixed_h;  // absent: Silverman per (re)sample
};

struct BootstrapBoundaryResult {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> replicate_values;  // crossing replicates, in replicate order
  std::size_t n_no_crossing = 0;         // includes degenerate replicates
  bool unreliable = false;               // more than half the replicates failed
};

namespace detail {

inline std::optional<double> replicate_boundary(const SortedSample& sorted,
                                                const BoundaryPipelineConfig& cfg) {
  double h;
  if (cfg.fixed_h) {
    h = *cfg.fixed_h;
  } else {
    if (sorted.n() < 2) return std::nullopt;
    const double sd = sample_sd(sorted.distances);
    if (!(sd > 0.0)) return std::nullopt;
    h = 1.06 * sd * std::pow(static_cast<double>(sorted.n()), -0.2);
  }
  CurveOptions lean;
  lean.with_density = false;
  lean.with_variance = false;
  try {
    const DecayCurve curve =
        fit_decay_curve(sorted, cfg.grid, {h, BandwidthMethod::fixed}, cfg.kernel, cfg.order, lean);
    const BoundaryEstimate est = estimate_boundary(curve, cfg.epsilon, cfg.interpolate);
    return est.d_star;
  } catch (const SingularFitError&) {
    return std::nullopt;
  } catch (const EstimationError&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Subsample bootstrap CI for the boundary: B resamples of size n_b with
/// replacement, percentile interval of the replicate boundaries. Replicates
/// without a crossing are excluded from the quantiles and counted. Identical
/// seeds give bitwise identical results regardless of worker count.
inline BootstrapBoundaryResult bootstrap_boundary_ci(const DistancedSample& sample,
                                                     const BoundaryPipelineConfig& pipeline,
                                                     const BootstrapConfig& boot) {
  boot.validate();
  sample.validate();
  const SortedSample master = SortedSample::from(sample);
  std::vector<std::optional<double>> reps(boot.B);

  parallel_for_blocks(boot.B, [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      auto rng = make_engine(derive_seed(boot.seed, b));
      std::uniform_int_distribution<std::size_t> pick(0, master.n() - 1);
      std::vector<std::pair<double, double>> draw(boot.n_b);
      for (auto& p : draw) {
        const std::size_t i = pick(rng);
        p = {master.distances[i], master.outcomes[i]};
      }
      std::sort(draw.begin(), draw.end());
      SortedSample rs;
      rs.d_max = master.d_max;
      rs.distances.resize(boot.n_b);
      rs.outcomes.resize(boot.n_b);
      for (std::size_t i = 0; i < boot.n_b; ++i) {
        rs.distances[i] = draw[i].first;
        rs.outcomes[i] = draw[i].second;
      }
      reps[b] = detail::replicate_boundary(rs, pipeline);
    }
  });

  BootstrapBoundaryResult out;
  for (const auto& r : reps) {
    if (r)
      out.replicate_values.push_back(*r);
    else
      ++out.n_no_crossing;
  }
  if (out.replicate_values.empty())
    throw EstimationError("no bootstrap replicate produced a boundary crossing");
  out.unreliable = out.n_no_crossing * 2 > boot.B;
  std::vector<double> sorted_vals = out.replicate_values;
  std::sort(sorted_vals.begin(), sorted_vals.end());
  out.lo = quantile_sorted(sorted_vals, boot.alpha / 2.0);
  out.hi = quantile_sorted(sorted_vals, 1.0 - boot.alpha / 2.0);
  return out;
}

/// Plug-in asymptotic variance of the boundary estimator.
struct PlugInVariance {
  double V = 0.0;    // asymptotic variance
  double B_n = 0.0;  // smoothing bias
  double sigma2_at_dstar = 0.0;
  double m_prime_at_dstar = 0.0;
  double m_double_prime_at_dstar = 0.0;
  double f_at_dstar = 0.0;
  double mu2 = 0.0;
  double nu0 = 0.0;
  double h = 0.0;
  std::size_t n = 0;
};

struct PlugInCi {
  double lo = 0.0;
  double hi = 0.0;
  PlugInVariance variance;
};

inline constexpr double kSlopeFloorPerKm = 1e-6;

/// Bias-corrected normal CI: d_star - B_n +/- z sqrt(V / (n h)), with every
/// plug-in quantity read off the fitted curve at d_star. m'' comes from a
/// central difference of the stored slope array.
inline PlugInCi plug_in_ci(const DecayCurve& curve, const BoundaryEstimate& boundary,
                           double alpha = 0.05) {
  curve.validate();
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidConfigError("alpha must be in (0, 1)");
  if (!boundary.d_star)
    throw EstimationError("plug-in CI needs a boundary estimate with a crossing");
  if (curve.order < 1)
    throw InvalidConfigError("plug-in CI needs a curve fitted with order >= 1");
  const double d = *boundary.d_star;

  PlugInCi out;
  PlugInVariance& v = out.variance;
  v.h = curve.h.h;
  v.n = curve.n;
  v.mu2 = curve.kernel.mu2;
  v.nu0 = curve.kernel.nu0;
  v.m_prime_at_dstar = curve.slope_at(d);
  v.sigma2_at_dstar = curve.variance_at(d);
  v.f_at_dstar = curve.density_at(d);

  const std::size_t g = curve.grid.size();
  std::vector<double> m2(g);
  for (std::size_t i = 0; i < g; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 < g ? i + 1 : i;
    m2[i] = (curve.m_prime_hat[hi] - curve.m_prime_hat[lo]) / (curve.grid[hi] - curve.grid[lo]);
  }
  v.m_double_prime_at_dstar = interp_on_grid(curve.grid, m2, d);

  if (std::abs(v.m_prime_at_dstar) <= kSlopeFloorPerKm)
    throw EstimationError("curve is nearly flat at the crossing (|m'| <= 1e-6 per km); "
                          "boundary weakly identified");
  if (!(v.f_at_dstar > 0.0))
    throw EstimationError("estimated distance density vanishes at the boundary");

  v.B_n = 0.5 * v.h * v.h * (v.m_double_prime_at_dstar / v.m_prime_at_dstar) * v.mu2;
  v.V = v.sigma2_at_dstar * v.nu0 / (v.m_prime_at_dstar * v.m_prime_at_dstar * v.f_at_dstar);
  const double se = std::sqrt(v.V / (static_cast<double>(v.n) * v.h));
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const double center = d - v.B_n;
  out.lo = center - z * se;
  out.hi = center + z * se;
  return out;
}

struct HacConfig {
  double bandwidth_km = 50.0;  // Bartlett taper w = max(0, 1 - dist/bandwidth)
  std::uint64_t max_pairs_subsample = 20'000'000;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(bandwidth_km > 0.0)) throw InvalidConfigError("HAC bandwidth must be positive");
    if (max_pairs_subsample < 1) throw InvalidConfigError("max_pairs_subsample must be >= 1");
  }
};

struct HacResult {
  double se_hac = 0.0;
  double se_hc0 = 0.0;  // diagonal-only sandwich
  double se_iid = 0.0;  // classical OLS standard error
  std::uint64_t pairs_within_bandwidth = 0;
  bool subsampled = false;
  bool nonneg_clamped = false;
};

/// Conley-style sandwich SE for a single regression slope:
/// meat = sum_ij w(dist_ij) x_i x_j e_i e_j with demeaned regressor x and a
/// Bartlett taper. Pair enumeration goes through a lat/lon bucket grid sized
/// so that every pair within the bandwidth falls in adjacent cells; if the
/// within-bandwidth pair count exceeds the cap, pairs are Bernoulli-thinned
/// with inverse-probability scaling.
inline HacResult spatial_hac_se(std::span<const GeoPoint> locations,
                                std::span<const double> regressor,
                                std::span<const double> residuals, const HacConfig& cfg) {
  cfg.validate();
  const std::size_t n = locations.size();
  if (regressor.size() != n || residuals.size() != n)
    throw InvalidInputError("spatial_hac_se arrays are not aligned");
  if (n < 3) throw DegenerateInputError("spatial HAC needs at least 3 observations");

  const double x_mean = mean(regressor);
  std::vector<double> a(n);  // x_tilde_i * e_i
  CompensatedSum sxx_sum, diag_sum, ssr;
  double max_abs_lat = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = regressor[i] - x_mean;
    sxx_sum.add(x * x);
    a[i] = x * residuals[i];
    diag_sum.add(a[i] * a[i]);
    ssr.add(residuals[i] * residuals[i]);
    max_abs_lat = std::max(max_abs_lat, std::abs(locations[i].lat));
  }
  const double sxx = sxx_sum.value();
  if (!(sxx > 0.0)) throw DegenerateInputError("regressor has zero variance");

  const double km_per_deg = kEarthRadiusKm * std::numbers::pi / 180.0;
  const double cell_lat = cfg.bandwidth_km / km_per_deg;
  const double lat_cap = std::min(89.0, max_abs_lat + cell_lat);
  const double cell_lon = cfg.bandwidth_km / (km_per_deg * std::cos(deg2rad(lat_cap)));
  const std::int64_t lon_cells =
      std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(360.0 / cell_lon)));
  const double lon_width = 360.0 / static_cast<double>(lon_cells);

  auto cell_key = [&](const GeoPoint& p) {
    const auto r = static_cast<std::int64_t>(std::floor((p.lat + 90.0) / cell_lat));
    auto c = static_cast<std::int64_t>(std::floor((p.lon + 180.0) / lon_width));
    c = ((c % lon_cells) + lon_cells) % lon_cells;
    return r * (lon_cells + 2) + c;
  };
  std::unordered_map<std::int64_t, std::vector<std::uint32_t>> cells;
  for (std::size_t i = 0; i < n; ++i) cells[cell_key(locations[i])].push_back(i);

  auto for_each_neighbor = [&](std::size_t i, auto&& fn) {
    const auto r0 = static_cast<std::int64_t>(std::floor((locations[i].lat + 90.0) / cell_lat));
    auto c0 = static_cast<std::int64_t>(std::floor((locations[i].lon + 180.0) / lon_width));
    c0 = ((c0 % lon_cells) + lon_cells) % lon_cells;
    std::array<std::int64_t, 9> keys{};
    std::size_t nk = 0;
    for (std::int64_t dr = -1; dr <= 1; ++dr)
      for (std::int64_t dc = -1; dc <= 1; ++dc) {
        const std::int64_t c = ((c0 + dc) % lon_cells + lon_cells) % lon_cells;
        keys[nk++] = (r0 + dr) * (lon_cells + 2) + c;
      }
    // wrap can alias neighbor columns when very few longitude cells exist
    std::sort(keys.begin(), keys.begin() + nk);
    nk = static_cast<std::size_t>(std::unique(keys.begin(), keys.begin() + nk) - keys.begin());
    for (std::size_t k = 0; k < nk; ++k) {
      const auto it = cells.find(keys[k]);
      if (it == cells.end()) continue;
      for (std::uint32_t j : it->second)
        if (j > i) fn(j);
    }
  };

  // pass 1: count pairs actually inside the bandwidth
  std::vector<std::uint64_t> pair_counts(n, 0);
  parallel_for_blocks(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      for_each_neighbor(i, [&](std::uint32_t j) {
        if (detail::haversine_unchecked(locations[i], locations[j]) < cfg.bandwidth_km)
          ++pair_counts[i];
      });
  });
  std::uint64_t pairs = 0;
  for (auto c : pair_counts) pairs += c;

  HacResult out;
  out.pairs_within_bandwidth = pairs;
  out.subsampled = pairs > cfg.max_pairs_subsample;
  const double keep_prob =
      out.subsampled ? static_cast<double>(cfg.max_pairs_subsample) / static_cast<double>(pairs)
                     : 1.0;

  // pass 2: accumulate, per-i partials combined in index order for determinism
  std::vector<double> partial(n, 0.0);
  parallel_for_blocks(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto rng = make_engine(derive_seed(cfg.seed, i));
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      double acc = 0.0;
      for_each_neighbor(i, [&](std::uint32_t j) {
        const double dist = detail::haversine_unchecked(locations[i], locations[j]);
        if (dist >= cfg.bandwidth_km) return;
        if (out.subsampled && unif(rng) >= keep_prob) return;
        const double w = 1.0 - dist / cfg.bandwidth_km;
        acc += 2.0 * w * a[i] * a[j];
      });
      partial[i] = acc;
    }
  });
  CompensatedSum offdiag;
  for (double p : partial) offdiag.add(p);

  double meat = diag_sum.value() + offdiag.value() / keep_prob;
  if (meat < 0.0) {
    meat = 0.0;
    out.nonneg_clamped = true;
  }
  out.se_hac = std::sqrt(meat) / sxx;
  out.se_hc0 = std::sqrt(diag_sum.value()) / sxx;
  out.se_iid = std::sqrt(ssr.value() / static_cast<double>(n - 2) / sxx);
  return out;
}

struct SpecTestConfig {
  std::optional<GridSpec> grid;  // default: 1 km grid over the sample support
  KernelSpec kernel = KernelSpec::epanechnikov();
  int order = 1;
  std::optional<double> fixed_h;  // absent: Silverman on the distances
};

struct SpecTestResult {
  double T_n = 0.0;
  double p_value = 1.0;
  std::size_t B_used = 0;
  double h = 0.0;
  bool reject_at_10 = false;
  bool reject_at_05 = false;
  bool reject_at_01 = false;
};

namespace detail {

inline double integrated_sq_deviation(const SortedSample& resid_sample,
                                      const std::vector<double>& grid, double h,
                                      const KernelSpec& kernel, int order) {
  CurveOptions lean;
  lean.with_variance = false;
  GridSpec gs{grid.front(), grid.back(), grid.size()};
  const DecayCurve smooth = fit_decay_curve(resid_sample, gs, {h, BandwidthMethod::fixed},
                                            kernel, order, lean);
  std::vector<double> integrand(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    integrand[i] = smooth.m_hat[i] * smooth.m_hat[i] * smooth.f_hat[i];
  return trapezoid(grid, integrand);
}

}  // namespace detail

/// Functional-form test of the exponential baseline. The statistic integrates
/// the squared local-linear smooth of the log residuals against the distance
/// density; its null distribution comes from a residual bootstrap that
/// regenerates log outcomes under the fitted exponential.
inline SpecTestResult specification_test(const DistancedSample& sample, const ExponentialFit& fit,
                                         const SpecTestConfig& config, const BootstrapConfig& boot) {
  boot.validate();
  sample.validate();

  std::vector<std::pair<double, double>> rows;  // (distance, log residual)
  rows.reserve(sample.n());
  for (std::size_t i = 0; i < sample.n(); ++i) {
    const double y = sample.outcomes[i];
    if (!(y > 0.0)) continue;
    const double e = std::log(y) - (fit.intercept - fit.kappa * sample.distances[i]);
    rows.emplace_back(sample.distances[i], e);
  }
  if (rows.size() < 3) throw DegenerateInputError("too few positive outcomes for the test");
  std::sort(rows.begin(), rows.end());

  const std::size_t n = rows.size();
  SortedSample resid_sample;
  resid_sample.d_max = sample.d_max;
  resid_sample.distances.resize(n);
  resid_sample.outcomes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    resid_sample.distances[i] = rows[i].first;
    resid_sample.outcomes[i] = rows[i].second;
  }

  double h;
  if (config.fixed_h) {
    h = *config.fixed_h;
  } else {
    const double sd = sample_sd(resid_sample.distances);
    if (!(sd > 0.0)) throw DegenerateInputError("distances have zero variance");
    h = 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
  }
  const GridSpec gs = config.grid ? *config.grid : GridSpec::default_for(resid_sample.d_max);
  const std::vector<double> grid = gs.make();

  SpecTestResult out;
  out.h = h;
  out.B_used = boot.B;
  out.T_n = detail::integrated_sq_deviation(resid_sample, grid, h, config.kernel, config.order);

  // pooled OLS pieces reused by every replicate (distances never change)
  const double d_mean = mean(resid_sample.distances);
  double sxx = 0.0;
  for (double d : resid_sample.distances) sxx += (d - d_mean) * (d - d_mean);
  if (!(sxx > 0.0)) throw DegenerateInputError("distances have zero variance");

  std::vector<double> boot_T(boot.B);
  parallel_for_blocks(boot.B, [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      auto rng = make_engine(derive_seed(boot.seed, b));
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      SortedSample rs;
      rs.d_max = resid_sample.d_max;
      rs.distances = resid_sample.distances;
      rs.outcomes.resize(n);
      // rebuild log outcomes under H0, then refit and re-smooth the residuals
      double e_mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        rs.outcomes[i] = resid_sample.outcomes[pick(rng)];
        e_mean += rs.outcomes[i];
      }
      e_mean /= static_cast<double>(n);
      double sxy = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        sxy += (rs.distances[i] - d_mean) * (rs.outcomes[i] - e_mean);
      const double slope = sxy / sxx;
      for (std::size_t i = 0; i < n; ++i)
        rs.outcomes[i] -= e_mean + slope * (rs.distances[i] - d_mean);
      boot_T[b] = detail::integrated_sq_deviation(rs, grid, h, config.kernel, config.order);
    }
  });

  std::size_t count = 0;
  for (double t : boot_T)
    if (t >= out.T_n) ++count;
  out.p_value = static_cast<double>(count) / static_cast<double>(boot.B);
  out.reject_at_10 = out.p_value < 0.10;
  out.reject_at_05 = out.p_value < 0.05;
  out.reject_at_01 = out.p_value < 0.01;
  return out;
}

}  // namespace decayscope
