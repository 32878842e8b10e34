#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "decayscope/errors.hpp"
#include "decayscope/geo.hpp"
#include "decayscope/ingest.hpp"
#include "decayscope/rng.hpp"
#include "decayscope/sample.hpp"
#include "decayscope/stats.hpp"

namespace decayscope {

/// Ground-truth data generator used as the verification oracle for the
/// estimators.
struct SyntheticSpec {
  enum class Form { exponential, quadratic_exponent, two_regime, piecewise_table };
  enum class NoiseLaw { additive_gaussian, lognormal };
  enum class DistanceLaw { uniform, ring };

  Form form = Form::exponential;
  double A = 2.28;
  double kappa = 0.00701;  // exponential
  double a = 0.0075;       // quadratic exponent: m = A exp(-a d + b d^2)
  double b = 0.00002;
  double kappa_near = 0.00685;  // two regime, continuous at break_km
  double kappa_far = -0.00042;
  double break_km = 100.0;
  std::vector<double> table_d, table_m;  // piecewise table, linear interpolation

  double noise_sd = 0.0;  // outcome units (additive) or log units (lognormal)
  NoiseLaw noise_law = NoiseLaw::additive_gaussian;
  DistanceLaw distance_law = DistanceLaw::uniform;
  double d_max = 100.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(A > 0.0)) throw InvalidConfigError("synthetic amplitude A must be positive");
    if (n < 1) throw InvalidConfigError("synthetic n must be >= 1");
    if (noise_sd < 0.0) throw InvalidConfigError("noise_sd must be >= 0");
    if (!(d_max > 0.0)) throw InvalidConfigError("d_max must be positive");
    if (form == Form::piecewise_table &&
        (table_d.size() != table_m.size() || table_d.size() < 2))
      throw InvalidConfigError("piecewise table needs matching arrays of length >= 2");
  }

  double true_m(double d) const {
    switch (form) {
      case Form::exponential:
        return A * std::exp(-kappa * d);
      case Form::quadratic_exponent:
        return A * std::exp(-a * d + b * d * d);
      case Form::two_regime:
        if (d <= break_km) return A * std::exp(-kappa_near * d);
        return A * std::exp(-kappa_near * break_km - kappa_far * (d - break_km));
      case Form::piecewise_table:
        return interp_on_grid(table_d, table_m, d);
    }
    return 0.0;
  }
};

/// Smallest d >= 0 with m(d) <= eps * m(0). Closed form where the decay form
/// admits one, grid scan plus bisection otherwise. The value may exceed d_max
/// (the boundary can lie outside the study window); absent means no crossing
/// up to the searched horizon.
inline std::optional<double> true_boundary(const SyntheticSpec& spec, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw InvalidConfigError("epsilon must be in (0, 1)");
  const double log_eps = std::log(epsilon);
  switch (spec.form) {
    case SyntheticSpec::Form::exponential:
      if (!(spec.kappa > 0.0)) return std::nullopt;
      return -log_eps / spec.kappa;
    case SyntheticSpec::Form::quadratic_exponent: {
      // solve b d^2 - a d - log(eps) = 0, first crossing is the smaller root
      if (spec.b == 0.0) return spec.a > 0.0 ? std::optional(-log_eps / spec.a) : std::nullopt;
      const double disc = spec.a * spec.a + 4.0 * spec.b * log_eps;
      if (disc < 0.0) return std::nullopt;  // curve turns before reaching the threshold
      const double root = (spec.a - std::sqrt(disc)) / (2.0 * spec.b);
      return root >= 0.0 ? std::optional(root) : std::nullopt;
    }
    case SyntheticSpec::Form::two_regime: {
      if (spec.kappa_near > 0.0 && -log_eps / spec.kappa_near <= spec.break_km)
        return -log_eps / spec.kappa_near;
      const double deficit = -log_eps - spec.kappa_near * spec.break_km;
      if (spec.kappa_far > 0.0 && deficit > 0.0) return spec.break_km + deficit / spec.kappa_far;
      return std::nullopt;
    }
    case SyntheticSpec::Form::piecewise_table: {
      const double tau = epsilon * spec.true_m(0.0);
      const double hi = spec.table_d.back();
      const int steps = 20000;
      double prev_d = 0.0, prev_m = spec.true_m(0.0);
      if (prev_m <= tau) return 0.0;
      for (int i = 1; i <= steps; ++i) {
        const double d = hi * static_cast<double>(i) / steps;
        const double m = spec.true_m(d);
        if (m <= tau) {
          double lo_d = prev_d, hi_d = d;
          for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo_d + hi_d);
            (spec.true_m(mid) <= tau ? hi_d : lo_d) = mid;
          }
          return 0.5 * (lo_d + hi_d);
        }
        prev_d = d;
        prev_m = m;
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

struct SyntheticData {
  DistancedSample sample;
  std::vector<double> errors;  // the realized noise, for diagnostics
};

/// Draws (D, Y) with Y = m(D) + noise (or m(D) * exp(noise) under the
/// lognormal law). Deterministic under the spec's seed.
inline SyntheticData generate(const SyntheticSpec& spec) {
  spec.validate();
  auto rng = make_engine(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SyntheticData out;
  out.sample.distances.resize(spec.n);
  out.sample.outcomes.resize(spec.n);
  out.errors.resize(spec.n);
  out.sample.d_max = spec.d_max;
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double u = unif(rng);
    const double d = spec.distance_law == SyntheticSpec::DistanceLaw::ring
                         ? spec.d_max * std::sqrt(u)  // density proportional to d
                         : spec.d_max * u;
    const double e = spec.noise_sd > 0.0 ? spec.noise_sd * gauss(rng) : 0.0;
    out.sample.distances[i] = d;
    out.errors[i] = e;
    out.sample.outcomes[i] = spec.noise_law == SyntheticSpec::NoiseLaw::lognormal
                                 ? spec.true_m(d) * std::exp(e)
                                 : spec.true_m(d) + e;
  }
  return out;
}

struct SpatialSynthResult {
  std::vector<ObservationRecord> observations;
  std::vector<GeoPoint> locations;
  std::vector<double> errors;  // realized field values, aligned with observations
  DistancedSample sample;     // nearest-source distance and outcome per observation
  bool lattice_used = false;
};

/// Observations on a map around the given sources, with spatially correlated
/// errors. The error field has isotropic exponential covariance
/// sd^2 exp(-dist/range); it is simulated exactly on a coarse lattice and
/// carried to the observation points by bilinear interpolation, which is the
/// documented approximation. Ranges too short for the lattice to resolve fall
/// back to independent errors.
inline SpatialSynthResult generate_spatial(const SyntheticSpec& spec,
                                           const std::vector<GeoPoint>& sources,
                                           double extent_km, double correlation_range_km,
                                           const std::string& period = "1") {
  spec.validate();
  if (sources.empty()) throw InvalidConfigError("generate_spatial needs at least one source");
  if (!(correlation_range_km > 0.0))
    throw InvalidConfigError("correlation range must be positive");
  if (!(extent_km > 0.0)) throw InvalidConfigError("extent must be positive");

  double lat_c = 0.0, lon_c = 0.0;
  for (const auto& s : sources) {
    const GeoPoint v = validated_point(s.lat, s.lon);
    lat_c += v.lat;
    lon_c += v.lon;
  }
  lat_c /= static_cast<double>(sources.size());
  lon_c /= static_cast<double>(sources.size());
  const double km_per_deg = kEarthRadiusKm * std::numbers::pi / 180.0;
  const double km_per_deg_lon = km_per_deg * std::cos(deg2rad(lat_c));

  auto rng = make_engine(spec.seed);
  std::uniform_real_distribution<double> unif(-extent_km, extent_km);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // observation coordinates, in local km offsets from the center
  std::vector<double> px(spec.n), py(spec.n);
  SpatialSynthResult out;
  out.locations.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    px[i] = unif(rng);
    py[i] = unif(rng);
    out.locations[i] = validated_point(lat_c + py[i] / km_per_deg, lon_c + px[i] / km_per_deg_lon);
  }

  // error field
  out.errors.assign(spec.n, 0.0);
  if (spec.noise_sd > 0.0) {
    constexpr int kMaxNodesPerAxis = 40;
    const double achievable = 2.0 * extent_km / (kMaxNodesPerAxis - 1);
    const double spacing = std::max(correlation_range_km / 2.0, achievable);
    out.lattice_used = correlation_range_km >= achievable / 2.0;
    if (!out.lattice_used) {
      for (std::size_t i = 0; i < spec.n; ++i) out.errors[i] = spec.noise_sd * gauss(rng);
    } else {
      const int m = std::min<int>(kMaxNodesPerAxis,
                                  static_cast<int>(std::floor(2.0 * extent_km / spacing)) + 1);
      const double step = 2.0 * extent_km / (m - 1);
      const std::size_t nodes = static_cast<std::size_t>(m) * static_cast<std::size_t>(m);
      auto node_xy = [&](std::size_t k) {
        return std::pair<double, double>{-extent_km + step * static_cast<double>(k % m),
                                         -extent_km + step * static_cast<double>(k / m)};
      };
      // dense Cholesky of the lattice covariance; nodes <= 1600
      std::vector<double> L(nodes * nodes, 0.0);
      for (std::size_t i = 0; i < nodes; ++i) {
        const auto [xi, yi] = node_xy(i);
        for (std::size_t j = 0; j <= i; ++j) {
          const auto [xj, yj] = node_xy(j);
          const double dist = std::hypot(xi - xj, yi - yj);
          L[i * nodes + j] = spec.noise_sd * spec.noise_sd *
                             std::exp(-dist / correlation_range_km);
        }
        L[i * nodes + i] += 1e-10;
      }
      for (std::size_t j = 0; j < nodes; ++j) {
        double d = L[j * nodes + j];
        for (std::size_t k = 0; k < j; ++k) d -= L[j * nodes + k] * L[j * nodes + k];
        if (!(d > 0.0)) throw EstimationError("lattice covariance lost positive definiteness");
        const double dj = std::sqrt(d);
        L[j * nodes + j] = dj;
        for (std::size_t i = j + 1; i < nodes; ++i) {
          double s = L[i * nodes + j];
          for (std::size_t k = 0; k < j; ++k) s -= L[i * nodes + k] * L[j * nodes + k];
          L[i * nodes + j] = s / dj;
        }
      }
      std::vector<double> z(nodes), field(nodes, 0.0);
      for (auto& v : z) v = gauss(rng);
      for (std::size_t i = 0; i < nodes; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k <= i; ++k) s += L[i * nodes + k] * z[k];
        field[i] = s;
      }
      for (std::size_t i = 0; i < spec.n; ++i) {
        const double gx = std::clamp((px[i] + extent_km) / step, 0.0, static_cast<double>(m - 1));
        const double gy = std::clamp((py[i] + extent_km) / step, 0.0, static_cast<double>(m - 1));
        const int x0 = std::min(m - 2, static_cast<int>(gx));
        const int y0 = std::min(m - 2, static_cast<int>(gy));
        const double tx = gx - x0, ty = gy - y0;
        auto at = [&](int x, int y) { return field[static_cast<std::size_t>(y) * m + x]; };
        out.errors[i] = (1 - tx) * (1 - ty) * at(x0, y0) + tx * (1 - ty) * at(x0 + 1, y0) +
                        (1 - tx) * ty * at(x0, y0 + 1) + tx * ty * at(x0 + 1, y0 + 1);
      }
    }
  }

  std::vector<SourceSet::Site> sites;
  sites.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i)
    sites.push_back({"S" + std::to_string(i + 1), sources[i]});
  const SourceSet source_set(std::move(sites));
  std::vector<double> dist = nearest_source_km(out.locations, source_set);

  out.observations.resize(spec.n);
  out.sample.distances = dist;
  out.sample.outcomes.resize(spec.n);
  double dmax = 0.0;
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double md = spec.true_m(dist[i]);
    const double y = spec.noise_law == SyntheticSpec::NoiseLaw::lognormal
                         ? md * std::exp(out.errors[i])
                         : md + out.errors[i];
    out.sample.outcomes[i] = y;
    out.observations[i] = {out.locations[i], period, "", y};
    dmax = std::max(dmax, dist[i]);
  }
  out.sample.d_max = dmax;
  return out;
}

}  // namespace decayscope
