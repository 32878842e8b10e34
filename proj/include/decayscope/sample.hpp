#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "decayscope/errors.hpp"
#include "decayscope/stats.hpp"

namespace decayscope {

/// Flat (distance, outcome) arrays; the estimators' sole input.
struct DistancedSample {
  std::vector<double> distances;  // km, within [0, d_max]
  std::vector<double> outcomes;
  double d_max = 0.0;  // support upper bound

  std::size_t n() const { return distances.size(); }

  void validate() const {
    if (distances.size() != outcomes.size())
      throw InvalidInputError("sample arrays have mismatched lengths");
    if (distances.empty()) throw DegenerateInputError("sample is empty");
    for (double d : distances)
      if (!(d >= 0.0) || d > d_max)
        throw InvalidInputError("distance outside [0, d_max]");
  }
};

struct SummaryStats {
  std::size_t n = 0;
  double mean = 0.0;  // outcome mean
  double sd = 0.0;    // outcome sample sd (ddof = 1)
  double min_distance = 0.0;
  double max_distance = 0.0;
};

inline SummaryStats summarize(const DistancedSample& sample) {
  if (sample.n() == 0) throw DegenerateInputError("cannot summarize an empty sample");
  SummaryStats s;
  s.n = sample.n();
  s.mean = mean(sample.outcomes);
  s.sd = sample.n() >= 2 ? sample_sd(sample.outcomes) : 0.0;
  const auto [lo, hi] = std::minmax_element(sample.distances.begin(), sample.distances.end());
  s.min_distance = *lo;
  s.max_distance = *hi;
  return s;
}

/// Sample sorted by distance (ties broken by outcome), the layout the local
/// fits want. Sorting here keeps DistancedSample itself order-preserving.
struct SortedSample {
  std::vector<double> distances;
  std::vector<double> outcomes;
  double d_max = 0.0;

  std::size_t n() const { return distances.size(); }

  static SortedSample from(const DistancedSample& s) {
    s.validate();
    std::vector<std::size_t> idx(s.n());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (s.distances[a] != s.distances[b]) return s.distances[a] < s.distances[b];
      return s.outcomes[a] < s.outcomes[b];
    });
    SortedSample out;
    out.distances.reserve(s.n());
    out.outcomes.reserve(s.n());
    for (std::size_t i : idx) {
      out.distances.push_back(s.distances[i]);
      out.outcomes.push_back(s.outcomes[i]);
    }
    out.d_max = s.d_max;
    return out;
  }
};

// ---- DSMP binary sample format -------------------------------------------
// 16-byte header: magic "DSMP", version u32, n u64; then distances[n] and
// outcomes[n] as little-endian f64.

inline constexpr std::uint32_t kDsmpVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "DSMP writer assumes a little-endian host");

inline void write_dsmp(const DistancedSample& sample, const std::string& path) {
  sample.validate();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInputError("cannot open for writing: " + path);
  const char magic[4] = {'D', 'S', 'M', 'P'};
  const std::uint32_t version = kDsmpVersion;
  const std::uint64_t n = sample.n();
  f.write(magic, 4);
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&n), 8);
  f.write(reinterpret_cast<const char*>(sample.distances.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  f.write(reinterpret_cast<const char*>(sample.outcomes.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!f) throw InvalidInputError("short write to " + path);
}

/// Reads a DSMP file. The on-disk format carries no support bound, so d_max is
/// reconstructed as the maximum stored distance.
inline DistancedSample read_dsmp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInputError("cannot open: " + path);
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t n = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&n), 8);
  if (!f || std::memcmp(magic, "DSMP", 4) != 0)
    throw InvalidInputError(path + " is not a DSMP file");
  if (version != kDsmpVersion)
    throw InvalidInputError("unsupported DSMP version " + std::to_string(version));
  DistancedSample s;
  s.distances.resize(n);
  s.outcomes.resize(n);
  f.read(reinterpret_cast<char*>(s.distances.data()),
         static_cast<std::streamsize>(n * sizeof(double)));
  f.read(reinterpret_cast<char*>(s.outcomes.data()),
         static_cast<std::streamsize>(n * sizeof(double)));
  if (!f) throw InvalidInputError("truncated DSMP file: " + path);
  s.d_max = n ? *std::max_element(s.distances.begin(), s.distances.end()) : 0.0;
  s.validate();
  return s;
}

}  // namespace decayscope
