#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "decayscope/ingest.hpp"
#include "decayscope/synth.hpp"

using namespace decayscope;
using Catch::Approx;

namespace {

// test-side root finder on true_m, independent of the library's closed forms
double bisect_boundary(const SyntheticSpec& spec, double eps, double hi) {
  const double tau = eps * spec.true_m(0.0);
  double prev = 0.0;
  const int steps = 200000;
  for (int i = 1; i <= steps; ++i) {
    const double d = hi * i / steps;
    if (spec.true_m(d) <= tau) {
      double lo_d = prev, hi_d = d;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo_d + hi_d);
        (spec.true_m(mid) <= tau ? hi_d : lo_d) = mid;
      }
      return 0.5 * (lo_d + hi_d);
    }
    prev = d;
  }
  return -1.0;
}

double pair_correlation(const std::vector<GeoPoint>& pts, const std::vector<double>& e,
                        double lo_km, double hi_km) {
  double sxy = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double d = haversine_km(pts[i], pts[j]);
      if (d < lo_km || d > hi_km) continue;
      sxy += e[i] * e[j];
      sx += e[i];
      sy += e[j];
      sxx += e[i] * e[i];
      syy += e[j] * e[j];
      ++n;
    }
  if (n < 10) return 0.0;
  const double cn = static_cast<double>(n);
  const double cov = sxy / cn - (sx / cn) * (sy / cn);
  const double vx = sxx / cn - (sx / cn) * (sx / cn);
  const double vy = syy / cn - (sy / cn) * (sy / cn);
  return cov / std::sqrt(vx * vy);
}

}  // namespace

TEST_CASE("noiseless generation lies exactly on the decay function") {
  SyntheticSpec spec;
  spec.n = 500;
  spec.seed = 3;
  spec.noise_sd = 0.0;
  const auto data = generate(spec);
  for (std::size_t i = 0; i < spec.n; ++i)
    REQUIRE(data.sample.outcomes[i] == spec.true_m(data.sample.distances[i]));
}

TEST_CASE("seed repetition is bitwise deterministic") {
  SyntheticSpec spec;
  spec.n = 2000;
  spec.seed = 99;
  spec.noise_sd = 0.2;
  const auto a = generate(spec);
  const auto b = generate(spec);
  for (std::size_t i = 0; i < spec.n; ++i) {
    REQUIRE(a.sample.distances[i] == b.sample.distances[i]);
    REQUIRE(a.sample.outcomes[i] == b.sample.outcomes[i]);
  }
  spec.seed = 100;
  const auto c = generate(spec);
  REQUIRE(a.sample.distances[0] != c.sample.distances[0]);
}

TEST_CASE("true boundaries: closed forms agree with root finding") {
  SECTION("exponential") {
    SyntheticSpec spec;
    spec.n = 1;
    REQUIRE(*true_boundary(spec, 0.5) == Approx(98.87976898144726).margin(1e-9));
    REQUIRE(*true_boundary(spec, 0.5) == Approx(bisect_boundary(spec, 0.5, 200.0)).margin(1e-6));
    REQUIRE(*true_boundary(spec, 0.1) == Approx(328.47148259544167).margin(1e-9));
  }

  SECTION("quadratic exponent") {
    SyntheticSpec spec;
    spec.form = SyntheticSpec::Form::quadratic_exponent;
    spec.n = 1;
    const auto d = true_boundary(spec, 0.5);
    REQUIRE(d.has_value());
    REQUIRE(*d == Approx(bisect_boundary(spec, 0.5, 400.0)).margin(1e-6));
    // the upward-turning exponent never reaches 10% of the source level
    REQUIRE_FALSE(true_boundary(spec, 0.1).has_value());
  }

  SECTION("two regime") {
    SyntheticSpec spec;
    spec.form = SyntheticSpec::Form::two_regime;
    spec.kappa_near = 0.02;
    spec.kappa_far = 0.01;
    spec.break_km = 30.0;
    spec.n = 1;
    // in-regime crossing
    REQUIRE(*true_boundary(spec, 0.8) == Approx(std::log(1.25) / 0.02).margin(1e-9));
    // far-regime crossing, checked against the root finder
    REQUIRE(*true_boundary(spec, 0.3) ==
            Approx(bisect_boundary(spec, 0.3, 400.0)).margin(1e-6));
    // rising far regime never crosses
    spec.kappa_far = -0.001;
    REQUIRE_FALSE(true_boundary(spec, 0.3).has_value());
  }

  SECTION("piecewise table") {
    SyntheticSpec spec;
    spec.form = SyntheticSpec::Form::piecewise_table;
    spec.table_d = {0.0, 25.0, 50.0, 75.0, 100.0};
    spec.table_m = {2.0, 1.6, 1.1, 0.7, 0.5};
    spec.n = 1;
    const auto d = true_boundary(spec, 0.5);  // tau = 1.0, crossing in (50, 75)
    REQUIRE(d.has_value());
    REQUIRE(*d == Approx(bisect_boundary(spec, 0.5, 100.0)).margin(1e-6));
    REQUIRE(*d == Approx(56.25).margin(1e-6));  // linear segment arithmetic
  }
}

TEST_CASE("distance laws") {
  SyntheticSpec spec;
  spec.n = 200000;
  spec.seed = 31;
  spec.noise_sd = 0.0;

  spec.distance_law = SyntheticSpec::DistanceLaw::uniform;
  auto u = generate(spec);
  double mu = 0;
  for (double d : u.sample.distances) mu += d;
  REQUIRE(mu / spec.n == Approx(50.0).margin(0.5));

  spec.distance_law = SyntheticSpec::DistanceLaw::ring;
  auto r = generate(spec);
  double mr = 0;
  for (double d : r.sample.distances) mr += d;
  REQUIRE(mr / spec.n == Approx(200.0 / 3.0).margin(0.5));
}

TEST_CASE("lognormal noise law is multiplicative") {
  SyntheticSpec spec;
  spec.n = 50000;
  spec.seed = 17;
  spec.noise_sd = 0.12;
  spec.noise_law = SyntheticSpec::NoiseLaw::lognormal;
  const auto data = generate(spec);
  double acc = 0.0, acc2 = 0.0;
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double le = std::log(data.sample.outcomes[i] / spec.true_m(data.sample.distances[i]));
    acc += le;
    acc2 += le * le;
  }
  const double m = acc / spec.n;
  REQUIRE(m == Approx(0.0).margin(0.005));
  REQUIRE(std::sqrt(acc2 / spec.n - m * m) == Approx(0.12).margin(0.005));
}

TEST_CASE("empirical band means converge to the decay function") {
  SyntheticSpec spec;
  spec.kappa = 0.02;
  spec.noise_sd = 0.3;
  spec.n = 200000;
  spec.seed = 8;
  const auto data = generate(spec);
  double acc = 0.0;
  std::size_t cnt = 0;
  for (std::size_t i = 0; i < spec.n; ++i)
    if (std::abs(data.sample.distances[i] - 50.0) <= 1.0) {
      acc += data.sample.outcomes[i];
      ++cnt;
    }
  const double band_mean = acc / static_cast<double>(cnt);
  const double se = 0.3 / std::sqrt(static_cast<double>(cnt));
  REQUIRE(band_mean == Approx(spec.true_m(50.0)).margin(4.0 * se + 1e-4));
}

TEST_CASE("generate_spatial: degenerate and correlated fields") {
  const std::vector<GeoPoint> sources{{40.0, -80.0}};

  SECTION("zero noise gives zero errors") {
    SyntheticSpec spec;
    spec.n = 300;
    spec.seed = 4;
    spec.noise_sd = 0.0;
    const auto r = generate_spatial(spec, sources, 150.0, 25.0);
    for (double e : r.errors) REQUIRE(e == 0.0);
    for (std::size_t i = 0; i < r.sample.n(); ++i)
      REQUIRE(r.sample.outcomes[i] == spec.true_m(r.sample.distances[i]));
  }

  SECTION("correlation range must be positive") {
    SyntheticSpec spec;
    spec.n = 10;
    REQUIRE_THROWS_AS(generate_spatial(spec, sources, 150.0, 0.0), InvalidConfigError);
    REQUIRE_THROWS_AS(generate_spatial(spec, sources, 150.0, -5.0), InvalidConfigError);
  }

  SECTION("tiny range degenerates to independent errors") {
    SyntheticSpec spec;
    spec.n = 700;
    spec.seed = 9;
    spec.noise_sd = 0.3;
    const auto r = generate_spatial(spec, sources, 150.0, 0.05);
    REQUIRE_FALSE(r.lattice_used);
    REQUIRE(std::abs(pair_correlation(r.locations, r.errors, 8.0, 12.0)) < 0.1);
  }

  SECTION("25 km range decays monotonically in 20 seeded reps") {
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      SyntheticSpec spec;
      spec.n = 600;
      spec.seed = 40 + seed;
      spec.noise_sd = 0.3;
      const auto r = generate_spatial(spec, sources, 150.0, 25.0);
      REQUIRE(r.lattice_used);
      const double near = pair_correlation(r.locations, r.errors, 8.0, 12.0);
      const double far = pair_correlation(r.locations, r.errors, 35.0, 45.0);
      if (near > far) ++ok;
    }
    REQUIRE(ok == 20);
  }
}

TEST_CASE("synthetic observations round-trip through the ingest CSV schema") {
  SyntheticSpec spec;
  spec.n = 200;
  spec.seed = 6;
  spec.noise_sd = 0.15;
  spec.kappa = 0.01;
  const std::vector<GeoPoint> sources{{40.0, -80.0}, {41.0, -78.5}};
  const auto r = generate_spatial(spec, sources, 120.0, 30.0, "2020");

  const auto dir = std::filesystem::temp_directory_path() / "decayscope_test_synth";
  std::filesystem::create_directories(dir);
  const auto obs_path = (dir / "obs.csv").string();
  write_observations_csv(r.observations, obs_path);

  std::vector<SourceSet::Site> sites{{"A", sources[0]}, {"B", sources[1]}};
  FilterConfig filter;
  filter.max_distance_km = 1000.0;
  const auto ing = stream_ingest(obs_path, SourceSet(sites), filter, 64);
  REQUIRE(ing.sample.n() == spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    REQUIRE(ing.sample.distances[i] == Approx(r.sample.distances[i]).margin(1e-6));
    REQUIRE(ing.sample.outcomes[i] == Approx(r.sample.outcomes[i]).epsilon(1e-9));
  }
  REQUIRE(ing.stats.by_period.at("2020").n == spec.n);
}
