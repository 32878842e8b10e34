#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "decayscope/geo.hpp"
#include "decayscope/parallel.hpp"
#include "decayscope/sample.hpp"

namespace decayscope {

/// One grid-cell observation.
struct ObservationRecord {
  GeoPoint location;
  std::string period;  // e.g. a year label; never empty
  std::string group;   // e.g. a state code; empty means absent
  double outcome = 0.0;
};

struct FilterConfig {
  double max_distance_km = 100.0;
  std::optional<std::unordered_set<std::string>> allowed_groups;
  std::optional<std::unordered_set<std::string>> allowed_periods;
  std::optional<double> min_outcome;

  void validate() const {
    if (!(max_distance_km > 0.0)) throw InvalidConfigError("max_distance_km must be positive");
  }
};

struct IngestOptions {
  // Malformed rows are counted and skipped; past this cumulative share the run aborts.
  double max_reject_fraction = 0.5;
  std::uint64_t reject_check_floor = 1000;  // don't abort before this many input rows
  std::size_t keep_reject_examples = 5;
  bool keep_locations = false;  // retain kept rows' coordinates (for spatial HAC)
};

struct RejectExample {
  std::uint64_t line = 0;  // 1-based, header is line 1
  std::string reason;
};

struct PeriodAccumulator {
  std::uint64_t n = 0;
  CompensatedSum outcome_sum;
};

struct IngestStats {
  std::uint64_t rows_in = 0;
  std::uint64_t rows_kept = 0;
  std::uint64_t rows_filtered = 0;
  std::uint64_t rows_rejected = 0;
  std::vector<RejectExample> reject_examples;
  std::unordered_map<std::string, PeriodAccumulator> by_period;  // kept rows only
};

struct IngestResult {
  DistancedSample sample;
  IngestStats stats;
  std::vector<GeoPoint> locations;  // kept rows, only when options.keep_locations
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

/// Splits into exactly `n` comma-separated fields; no quoting.
inline bool split_fields(std::string_view line, std::span<std::string_view> out) {
  std::size_t field = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      if (field >= out.size()) return false;
      out[field++] = line.substr(start, i - start);
      start = i + 1;
    }
  }
  return field == out.size();
}

struct ParsedRow {
  GeoPoint location;
  double outcome;
  std::uint32_t period_id;
};

}  // namespace detail

inline constexpr std::string_view kObservationHeader = "lat,lon,period,group,outcome";
inline constexpr std::string_view kSourcesHeader = "id,lat,lon";

/// Loads the `id,lat,lon` source CSV into a SourceSet.
inline SourceSet load_sources_csv(const std::string& path, double bucket_cell_deg = 1.0) {
  std::ifstream f(path);
  if (!f) throw InvalidInputError("cannot open sources file: " + path);
  std::string line;
  if (!std::getline(f, line) || detail::trim(line) != kSourcesHeader)
    throw InvalidInputError(path + ": expected header '" + std::string(kSourcesHeader) + "'");
  std::vector<SourceSet::Site> sites;
  std::uint64_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    const std::string_view sv = detail::trim(line);
    if (sv.empty()) continue;
    std::string_view fields[3];
    double lat, lon;
    if (!detail::split_fields(sv, fields) || !detail::parse_double(fields[1], lat) ||
        !detail::parse_double(fields[2], lon))
      throw InvalidInputError(path + ": malformed source row at line " + std::to_string(lineno));
    sites.push_back({std::string(detail::trim(fields[0])), validated_point(lat, lon)});
  }
  if (sites.empty()) throw InvalidConfigError(path + ": source file has no sites");
  return SourceSet(std::move(sites), bucket_cell_deg);
}

/// Writes observations in the schema stream_ingest consumes.
inline void write_observations_csv(std::span<const ObservationRecord> records,
                                   const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvalidInputError("cannot open for writing: " + path);
  f << kObservationHeader << '\n';
  char buf[128];
  for (const auto& r : records) {
    const int len = std::snprintf(buf, sizeof(buf), "%.10f,%.10f,%s,%s,%.12g\n", r.location.lat,
                                  r.location.lon, r.period.c_str(), r.group.c_str(), r.outcome);
    f.write(buf, len);
  }
  if (!f) throw InvalidInputError("short write to " + path);
}

/// Streams an observation CSV in bounded memory: rows are parsed and
/// pre-filtered serially, then each chunk gets nearest-source distances from
/// parallel workers whose outputs are appended in row order, so the result is
/// identical for any chunk size or worker count.
inline IngestResult stream_ingest(const std::string& observations_path, const SourceSet& sources,
                                  const FilterConfig& filter, std::size_t chunk_rows,
                                  const IngestOptions& options = {}) {
  filter.validate();
  if (chunk_rows == 0) throw InvalidConfigError("chunk_rows must be >= 1");
  std::ifstream f(observations_path);
  if (!f) throw InvalidInputError("cannot open observations file: " + observations_path);

  std::string line;
  if (!std::getline(f, line) || detail::trim(line) != kObservationHeader)
    throw InvalidInputError(observations_path + ": expected header '" +
                            std::string(kObservationHeader) + "'");

  IngestResult result;
  IngestStats& stats = result.stats;
  std::vector<std::string> period_names;
  std::unordered_map<std::string, std::uint32_t> period_ids;
  std::vector<detail::ParsedRow> chunk;
  chunk.reserve(std::min<std::size_t>(chunk_rows, 1u << 20));
  std::uint64_t lineno = 1;

  auto reject = [&](std::uint64_t at, const char* reason) {
    ++stats.rows_rejected;
    if (stats.reject_examples.size() < options.keep_reject_examples)
      stats.reject_examples.push_back({at, reason});
    if (stats.rows_in >= options.reject_check_floor &&
        static_cast<double>(stats.rows_rejected) >
            options.max_reject_fraction * static_cast<double>(stats.rows_in))
      throw InvalidInputError(observations_path + ": " + std::to_string(stats.rows_rejected) +
                              " of " + std::to_string(stats.rows_in) +
                              " rows rejected, past the abort threshold");
  };

  auto flush_chunk = [&] {
    if (chunk.empty()) return;
    std::vector<double> dist(chunk.size());
    parallel_for_blocks(chunk.size(), [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) dist[i] = sources.nearest_km(chunk[i].location);
    });
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      if (dist[i] > filter.max_distance_km) {
        ++stats.rows_filtered;
        continue;
      }
      ++stats.rows_kept;
      result.sample.distances.push_back(dist[i]);
      result.sample.outcomes.push_back(chunk[i].outcome);
      if (options.keep_locations) result.locations.push_back(chunk[i].location);
      auto& acc = stats.by_period[period_names[chunk[i].period_id]];
      ++acc.n;
      acc.outcome_sum.add(chunk[i].outcome);
    }
    chunk.clear();
  };

  while (std::getline(f, line)) {
    ++lineno;
    const std::string_view sv = detail::trim(line);
    if (sv.empty()) continue;
    ++stats.rows_in;

    std::string_view fields[5];
    double lat, lon, outcome;
    if (!detail::split_fields(sv, fields)) {
      reject(lineno, "wrong field count");
      continue;
    }
    if (!detail::parse_double(fields[0], lat) || !detail::parse_double(fields[1], lon)) {
      reject(lineno, "unparseable coordinate");
      continue;
    }
    if (!std::isfinite(lat) || !std::isfinite(lon) || lat < -90.0 || lat > 90.0) {
      reject(lineno, "coordinate out of range");
      continue;
    }
    const std::string_view period = detail::trim(fields[2]);
    if (period.empty()) {
      reject(lineno, "empty period");
      continue;
    }
    if (!detail::parse_double(fields[4], outcome) || !std::isfinite(outcome)) {
      reject(lineno, "non-finite outcome");
      continue;
    }

    const std::string_view group = detail::trim(fields[3]);
    if (filter.allowed_periods && !filter.allowed_periods->contains(std::string(period))) {
      ++stats.rows_filtered;
      continue;
    }
    if (filter.allowed_groups && !filter.allowed_groups->contains(std::string(group))) {
      ++stats.rows_filtered;
      continue;
    }
    if (filter.min_outcome && outcome < *filter.min_outcome) {
      ++stats.rows_filtered;
      continue;
    }

    const auto [it, inserted] =
        period_ids.try_emplace(std::string(period), static_cast<std::uint32_t>(period_names.size()));
    if (inserted) period_names.push_back(it->first);
    chunk.push_back({GeoPoint{lat, normalize_lon(lon)}, outcome, it->second});
    if (chunk.size() >= chunk_rows) flush_chunk();
  }
  flush_chunk();

  if (result.sample.n() == 0)
    throw DegenerateInputError(observations_path + ": no observations survived filters");
  result.sample.d_max = filter.max_distance_km;
  result.sample.validate();
  return result;
}

}  // namespace decayscope
