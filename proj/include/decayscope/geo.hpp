#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "decayscope/errors.hpp"
#include "decayscope/parallel.hpp"

namespace decayscope {

inline constexpr double kEarthRadiusKm = 6371.0;

struct GeoPoint {
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, [-180, 180)
};

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

/// Wraps an arbitrary finite longitude into [-180, 180).
inline double normalize_lon(double lon) {
  double x = std::fmod(lon + 180.0, 360.0);
  if (x < 0.0) x += 360.0;
  return x - 180.0;
}

/// Validates and normalizes a coordinate pair. Latitude out of [-90, 90] is a
/// hard error; longitude is wrapped.
inline GeoPoint validated_point(double lat, double lon) {
  if (!std::isfinite(lat) || !std::isfinite(lon))
    throw InvalidInputError("coordinate is not finite");
  if (lat < -90.0 || lat > 90.0)
    throw InvalidInputError("latitude " + std::to_string(lat) + " outside [-90, 90]");
  return GeoPoint{lat, normalize_lon(lon)};
}

namespace detail {

/// Haversine without input validation; both points assumed valid.
inline double haversine_unchecked(const GeoPoint& a, const GeoPoint& b) {
  const double phi1 = deg2rad(a.lat);
  const double phi2 = deg2rad(b.lat);
  const double dphi = phi2 - phi1;
  const double dlam = deg2rad(b.lon - a.lon);
  const double sp = std::sin(dphi / 2.0);
  const double sl = std::sin(dlam / 2.0);
  const double h = sp * sp + std::cos(phi1) * std::cos(phi2) * sl * sl;
  return kEarthRadiusKm * 2.0 * std::asin(std::min(1.0, std::sqrt(h)));
}

}  // namespace detail

/// Great-circle distance in km on a sphere of radius 6371 km.
inline double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  const GeoPoint va = validated_point(a.lat, a.lon);
  const GeoPoint vb = validated_point(b.lat, b.lon);
  return detail::haversine_unchecked(va, vb);
}

/// Point reached from origin after distance_km along the initial bearing
/// (radians clockwise from north). Spherical direct problem; the haversine
/// distance back to origin reproduces distance_km to rounding error.
inline GeoPoint destination_point(const GeoPoint& origin, double distance_km,
                                  double bearing_rad) {
  const GeoPoint o = validated_point(origin.lat, origin.lon);
  if (!(distance_km >= 0.0)) throw InvalidInputError("distance must be non-negative");
  const double delta = distance_km / kEarthRadiusKm;
  const double phi1 = deg2rad(o.lat);
  const double lam1 = deg2rad(o.lon);
  const double sin_phi2 = std::sin(phi1) * std::cos(delta) +
                          std::cos(phi1) * std::sin(delta) * std::cos(bearing_rad);
  const double phi2 = std::asin(std::clamp(sin_phi2, -1.0, 1.0));
  const double lam2 =
      lam1 + std::atan2(std::sin(bearing_rad) * std::sin(delta) * std::cos(phi1),
                        std::cos(delta) - std::sin(phi1) * sin_phi2);
  return GeoPoint{phi2 * 180.0 / std::numbers::pi,
                  normalize_lon(lam2 * 180.0 / std::numbers::pi)};
}

/// A fixed set of treatment sources with a lat/lon bucket grid for exact
/// nearest-site queries. Read-only after construction.
class SourceSet {
public:
  struct Site {
    std::string id;
    GeoPoint point;
  };

  explicit SourceSet(std::vector<Site> sites, double cell_deg = 1.0) : sites_(std::move(sites)) {
    if (sites_.empty()) throw InvalidConfigError("source set must not be empty");
    if (!(cell_deg > 0.0) || cell_deg > 90.0)
      throw InvalidConfigError("bucket cell size must be in (0, 90] degrees");
    cell_ = cell_deg;
    rows_ = static_cast<int>(std::ceil(180.0 / cell_));
    // Columns wrap, so they must be exactly uniform for the ring bounds to hold.
    cols_ = std::max(4, static_cast<int>(std::lround(360.0 / cell_)));
    col_width_ = 360.0 / cols_;
    for (std::size_t i = 0; i < sites_.size(); ++i) {
      sites_[i].point = validated_point(sites_[i].point.lat, sites_[i].point.lon);
      buckets_[key(row_of(sites_[i].point.lat), col_of(sites_[i].point.lon))].push_back(
          static_cast<std::uint32_t>(i));
    }
  }

  std::size_t size() const { return sites_.size(); }
  const Site& site(std::size_t i) const { return sites_[i]; }
  double cell_deg() const { return cell_; }

  /// Distance to the nearest site. The ring expansion only prunes cells whose
  /// spherical lower bound already exceeds the best distance found, so the
  /// result equals the exhaustive minimum bitwise.
  double nearest_km(const GeoPoint& query) const {
    const GeoPoint q = validated_point(query.lat, query.lon);
    const int row_q = row_of(q.lat);
    const int col_q = col_of(q.lon);
    const double sin_phi = std::sin(deg2rad(q.lat));
    const double cos_phi = std::cos(deg2rad(q.lat));

    double best = std::numeric_limits<double>::infinity();
    const int max_ring = rows_ + cols_;
    for (int k = 0; k <= max_ring; ++k) {
      scan_ring(q, row_q, col_q, k, best);
      const bool rows_done = (row_q - k <= 0) && (row_q + k >= rows_ - 1);
      const bool cols_done = 2 * k + 1 >= cols_;
      if (rows_done && cols_done) break;
      double lb = std::numeric_limits<double>::infinity();
      if (!rows_done) lb = std::min(lb, lat_ring_bound(k + 1));
      if (!cols_done) lb = std::min(lb, lon_ring_bound(k + 1, sin_phi, cos_phi));
      if (best <= lb) break;
    }
    return best;
  }

private:
  int row_of(double lat) const {
    return std::clamp(static_cast<int>(std::floor((lat + 90.0) / cell_)), 0, rows_ - 1);
  }
  int col_of(double lon) const {
    int c = static_cast<int>(std::floor((lon + 180.0) / col_width_));
    return ((c % cols_) + cols_) % cols_;
  }
  std::uint64_t key(int row, int col) const {
    return static_cast<std::uint64_t>(row) * static_cast<std::uint64_t>(cols_) +
           static_cast<std::uint64_t>(col);
  }

  void scan_cell(const GeoPoint& q, int row, int col, double& best) const {
    const auto it = buckets_.find(key(row, col));
    if (it == buckets_.end()) return;
    for (std::uint32_t i : it->second)
      best = std::min(best, detail::haversine_unchecked(q, sites_[i].point));
  }

  void scan_ring(const GeoPoint& q, int row_q, int col_q, int k, double& best) const {
    const int span = std::min(2 * k + 1, cols_);
    const int col_lo = col_q - k;
    auto wrap = [this](int c) { return ((c % cols_) + cols_) % cols_; };
    if (k == 0) {
      if (row_q >= 0 && row_q < rows_) scan_cell(q, row_q, wrap(col_q), best);
      return;
    }
    for (int row : {row_q - k, row_q + k}) {
      if (row < 0 || row >= rows_) continue;
      for (int c = 0; c < span; ++c) scan_cell(q, row, wrap(col_lo + c), best);
    }
    // Side columns exist only while the wrap distance k introduces new columns;
    // at 2k == cols the two sides coincide in one column.
    if (2 * k <= cols_) {
      for (int row = row_q - k + 1; row <= row_q + k - 1; ++row) {
        if (row < 0 || row >= rows_) continue;
        scan_cell(q, row, wrap(col_q + k), best);
        if (2 * k < cols_) scan_cell(q, row, wrap(col_q - k), best);
      }
    }
  }

  /// Any cell >= j rows away contains only points whose latitude differs from
  /// the query by at least (j-1) cells; arc length is at least that latitude gap.
  double lat_ring_bound(int j) const {
    return kEarthRadiusKm * deg2rad(std::max(0, j - 1) * cell_);
  }

  /// Any cell >= j columns away (minimal wrap distance) has longitude gap at
  /// least (j-1) cells. For fixed |dlon| the central angle over all latitudes
  /// is minimized at cos(theta) = sqrt(sin^2 phi + cos^2 phi cos^2 dlon) when
  /// cos(dlon) >= 0, and at |sin phi| otherwise.
  double lon_ring_bound(int j, double sin_phi, double cos_phi) const {
    const double dlon = std::min(180.0, std::max(0, j - 1) * col_width_);
    const double cd = std::cos(deg2rad(dlon));
    double kmax;
    if (cd >= 0.0)
      kmax = std::sqrt(sin_phi * sin_phi + cos_phi * cos_phi * cd * cd);
    else
      kmax = std::abs(sin_phi);
    return kEarthRadiusKm * std::acos(std::clamp(kmax, -1.0, 1.0));
  }

  std::vector<Site> sites_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets_;
  double cell_ = 1.0;
  double col_width_ = 1.0;
  int rows_ = 180;
  int cols_ = 360;
};

/// Nearest-source distance for each point. Pure over immutable inputs and
/// parallel over point blocks.
inline std::vector<double> nearest_source_km(std::span<const GeoPoint> points,
                                             const SourceSet& sources) {
  std::vector<double> out(points.size());
  parallel_for_blocks(points.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = sources.nearest_km(points[i]);
  });
  return out;
}

}  // namespace decayscope
