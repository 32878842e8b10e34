#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "decayscope/inference.hpp"
#include "decayscope/synth.hpp"

using namespace decayscope;
using Catch::Approx;

namespace {

DecayCurve analytic_curve(double A, double kappa, double f_const, double sigma2_const,
                          double d_max = 100.0) {
  DecayCurve c;
  for (double d = 0.0; d <= d_max + 1e-9; d += 1.0) {
    c.grid.push_back(d);
    c.m_hat.push_back(A * std::exp(-kappa * d));
    c.m_prime_hat.push_back(-kappa * A * std::exp(-kappa * d));
  }
  c.f_hat.assign(c.grid.size(), f_const);
  c.sigma2_hat.assign(c.grid.size(), sigma2_const);
  c.h = {3.0, BandwidthMethod::fixed};
  c.kernel = KernelSpec::epanechnikov();
  c.order = 1;
  c.n = 100000;
  return c;
}

BoundaryPipelineConfig default_pipeline(double epsilon = 0.5) {
  BoundaryPipelineConfig p;
  p.epsilon = epsilon;
  return p;
}

}  // namespace

TEST_CASE("bootstrap configuration guards") {
  SyntheticSpec spec;
  spec.n = 2000;
  spec.seed = 1;
  spec.noise_sd = 0.1;
  spec.kappa = 0.02;
  const auto data = generate(spec);

  BootstrapConfig boot;
  boot.B = 2;
  boot.n_b = 500;
  REQUIRE_THROWS_AS(bootstrap_boundary_ci(data.sample, default_pipeline(), boot),
                    InvalidConfigError);
  boot.allow_small_b = true;  // degenerate but permitted with the override
  REQUIRE_NOTHROW(bootstrap_boundary_ci(data.sample, default_pipeline(), boot));
  boot.B = 50;
  boot.n_b = 10;
  boot.allow_small_b = false;
  REQUIRE_THROWS_AS(bootstrap_boundary_ci(data.sample, default_pipeline(), boot),
                    InvalidConfigError);
  boot.n_b = 500;
  boot.alpha = 1.5;
  REQUIRE_THROWS_AS(bootstrap_boundary_ci(data.sample, default_pipeline(), boot),
                    InvalidConfigError);
}

TEST_CASE("noiseless samples give degenerate bootstrap intervals") {
  SECTION("linear decay: local linear is exact, so the CI has zero width") {
    DistancedSample s;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unif(0.0, 100.0);
    for (int i = 0; i < 4000; ++i) {
      const double d = unif(rng);
      s.distances.push_back(d);
      s.outcomes.push_back(2.0 - 0.015 * d);  // crosses 1.0 at 66.67 km
    }
    s.d_max = 100.0;
    BootstrapConfig boot;
    boot.B = 30;
    boot.n_b = 1000;
    boot.seed = 7;
    const auto r = bootstrap_boundary_ci(s, default_pipeline(), boot);
    REQUIRE(r.n_no_crossing == 0);
    REQUIRE(r.hi - r.lo <= 1e-9);
    REQUIRE(r.lo == Approx(200.0 / 3.0).margin(1e-6));
  }

  SECTION("noiseless exponential: width only from curvature-design interaction") {
    SyntheticSpec spec;
    spec.kappa = 0.02;
    spec.noise_sd = 0.0;
    spec.n = 20000;
    spec.seed = 11;
    const auto data = generate(spec);
    BootstrapConfig boot;
    boot.B = 30;
    boot.n_b = 2000;
    boot.seed = 3;
    const auto r = bootstrap_boundary_ci(data.sample, default_pipeline(), boot);
    REQUIRE(r.hi - r.lo <= 0.1);
  }
}

TEST_CASE("bootstrap determinism and quantile sandwich") {
  SyntheticSpec spec;
  spec.kappa = 0.02;
  spec.noise_sd = 0.2;
  spec.n = 20000;
  spec.seed = 23;
  const auto data = generate(spec);
  BootstrapConfig boot;
  boot.B = 40;
  boot.n_b = 4000;
  boot.seed = 1234;
  const auto a = bootstrap_boundary_ci(data.sample, default_pipeline(), boot);
  const auto b = bootstrap_boundary_ci(data.sample, default_pipeline(), boot);
  REQUIRE(a.lo == b.lo);
  REQUIRE(a.hi == b.hi);
  REQUIRE(a.replicate_values == b.replicate_values);

  boot.seed = 4321;
  const auto c = bootstrap_boundary_ci(data.sample, default_pipeline(), boot);
  REQUIRE(a.replicate_values != c.replicate_values);

  // the full-sample estimate sits inside the interval on this well-behaved DGP
  const auto curve = fit_decay_curve(data.sample, GridSpec::default_for(100.0),
                                     silverman_bandwidth(data.sample), KernelSpec::epanechnikov(), 1);
  const auto est = estimate_boundary(curve, 0.5, true);
  REQUIRE(*est.d_star >= a.lo);
  REQUIRE(*est.d_star <= a.hi);
}

TEST_CASE("mostly-missing replicates mark the interval unreliable") {
  // boundary just past the support edge: crossings only happen by luck
  SyntheticSpec spec;
  spec.kappa = 0.0068;  // d*(0.5) = 101.9 km > 100
  spec.noise_sd = 0.25;
  spec.n = 20000;
  spec.seed = 2;
  const auto data = generate(spec);
  BootstrapConfig boot;
  boot.B = 30;
  boot.n_b = 2000;
  boot.seed = 5;
  const auto r = bootstrap_boundary_ci(data.sample, default_pipeline(), boot);
  REQUIRE(r.n_no_crossing * 2 > boot.B);
  REQUIRE(r.unreliable);
}

TEST_CASE("plug-in variance pieces") {
  const auto curve = analytic_curve(2.28, 0.00701, 0.01, 0.04);
  const auto est = estimate_boundary(curve, 0.5, true);
  const auto ci = plug_in_ci(curve, est, 0.05);

  SECTION("components recompute by hand") {
    const double d = *est.d_star;
    const double mp = interp_on_grid(curve.grid, curve.m_prime_hat, d);
    const double expect_V = 0.04 * curve.kernel.nu0 / (mp * mp * 0.01);
    REQUIRE(ci.variance.V == Approx(expect_V).epsilon(1e-12));
    const double se = std::sqrt(expect_V / (100000.0 * 3.0));
    REQUIRE(ci.hi - ci.lo == Approx(2.0 * 1.959963984540054 * se).epsilon(1e-9));
  }

  SECTION("doubling the local variance doubles V") {
    auto curve2 = curve;
    for (auto& v : curve2.sigma2_hat) v *= 2.0;
    const auto ci2 = plug_in_ci(curve2, est, 0.05);
    REQUIRE(ci2.variance.V == Approx(2.0 * ci.variance.V).epsilon(1e-12));
  }

  SECTION("linear decay has zero smoothing bias") {
    DecayCurve lin;
    for (double d = 0.0; d <= 100.0; d += 1.0) {
      lin.grid.push_back(d);
      lin.m_hat.push_back(2.0 - 0.015 * d);
      lin.m_prime_hat.push_back(-0.015);
    }
    lin.f_hat.assign(lin.grid.size(), 0.01);
    lin.sigma2_hat.assign(lin.grid.size(), 0.04);
    lin.h = {3.0, BandwidthMethod::fixed};
    lin.kernel = KernelSpec::epanechnikov();
    lin.order = 1;
    lin.n = 100000;
    const auto el = estimate_boundary(lin, 0.5, true);
    const auto cil = plug_in_ci(lin, el, 0.05);
    REQUIRE(cil.variance.B_n == 0.0);
  }

  SECTION("nearly flat crossings are refused") {
    auto flat = curve;
    for (auto& v : flat.m_prime_hat) v = 1e-9;
    REQUIRE_THROWS_AS(plug_in_ci(flat, est, 0.05), EstimationError);
  }

  SECTION("boundary without a crossing is refused") {
    BoundaryEstimate none;
    none.epsilon = 0.5;
    REQUIRE_THROWS_AS(plug_in_ci(curve, none, 0.05), EstimationError);
  }
}

TEST_CASE("plug-in and bootstrap intervals agree within a factor of two") {
  SyntheticSpec spec;
  spec.noise_sd = 0.2;
  spec.n = 100000;
  spec.seed = 29;
  const auto data = generate(spec);
  const auto bw = silverman_bandwidth(data.sample);
  const auto curve = fit_decay_curve(data.sample, GridSpec::default_for(100.0), bw,
                                     KernelSpec::epanechnikov(), 1);
  const auto est = estimate_boundary(curve, 0.5, true);
  REQUIRE(est.d_star.has_value());
  const auto plug = plug_in_ci(curve, est, 0.05);

  BootstrapConfig boot;
  boot.B = 100;
  boot.n_b = 100000;  // full-size resamples so both intervals target the same law
  boot.seed = 61;
  const auto bs = bootstrap_boundary_ci(data.sample, default_pipeline(), boot);
  const double w_plug = plug.hi - plug.lo;
  const double w_boot = bs.hi - bs.lo;
  REQUIRE(w_plug / w_boot < 2.0);
  REQUIRE(w_boot / w_plug < 2.0);
}

TEST_CASE("spatial HAC standard errors") {
  SECTION("vanishing bandwidth reproduces the HC0 sandwich") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> lat(39.0, 41.0), lon(-81.0, -79.0);
    std::normal_distribution<double> noise(0.0, 0.5);
    std::vector<GeoPoint> pts(500);
    std::vector<double> x(500), e(500);
    double sxx = 0.0, diag = 0.0, xbar = 0.0;
    for (int i = 0; i < 500; ++i) {
      pts[i] = {lat(rng), lon(rng)};
      x[i] = haversine_km(pts[i], {40.0, -80.0});
      e[i] = noise(rng);
    }
    for (double v : x) xbar += v;
    xbar /= 500.0;
    for (int i = 0; i < 500; ++i) {
      sxx += (x[i] - xbar) * (x[i] - xbar);
      diag += (x[i] - xbar) * (x[i] - xbar) * e[i] * e[i];
    }
    HacConfig cfg;
    cfg.bandwidth_km = 1e-9;
    const auto r = spatial_hac_se(pts, x, e, cfg);
    REQUIRE(r.se_hac == r.se_hc0);
    REQUIRE(r.se_hc0 == Approx(std::sqrt(diag) / sxx).epsilon(1e-12));
    REQUIRE(r.pairs_within_bandwidth == 0);
  }

  SECTION("iid and correlated error ratios behave as expected") {
    const std::vector<GeoPoint> sources{{40.0, -80.0}};
    auto ratio_for = [&](double range, std::uint64_t seed) {
      SyntheticSpec spec;
      spec.n = 900;
      spec.seed = seed;
      spec.noise_sd = 0.12;
      spec.noise_law = SyntheticSpec::NoiseLaw::lognormal;
      const auto r = generate_spatial(spec, sources, 300.0, range);
      const auto fit = fit_exponential(r.sample);
      std::vector<double> resid(r.sample.n());
      for (std::size_t i = 0; i < r.sample.n(); ++i)
        resid[i] = std::log(r.sample.outcomes[i]) -
                   (fit.intercept - fit.kappa * r.sample.distances[i]);
      const auto hac = spatial_hac_se(r.locations, r.sample.distances, resid, {});
      return hac.se_hac / hac.se_iid;
    };
    int corr_above = 0;
    for (std::uint64_t s = 0; s < 5; ++s)
      if (ratio_for(25.0, 800 + s) > 1.2) ++corr_above;
    REQUIRE(corr_above >= 4);
    for (std::uint64_t s = 0; s < 5; ++s) {
      const double r = ratio_for(0.05, 900 + s);  // iid fallback
      REQUIRE(r > 0.8);
      REQUIRE(r < 1.3);
    }
  }

  SECTION("degenerate regressor") {
    std::vector<GeoPoint> pts{{40, -80}, {40.1, -80.1}, {40.2, -80.2}};
    std::vector<double> x{5.0, 5.0, 5.0}, e{0.1, -0.2, 0.3};
    REQUIRE_THROWS_AS(spatial_hac_se(pts, x, e, {}), DegenerateInputError);
  }

  SECTION("pair subsampling is flagged, scaled and deterministic") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> lat(39.5, 40.5), lon(-80.5, -79.5);
    std::normal_distribution<double> noise(0.0, 0.4);
    std::vector<GeoPoint> pts(400);
    std::vector<double> x(400), e(400);
    for (int i = 0; i < 400; ++i) {
      pts[i] = {lat(rng), lon(rng)};
      x[i] = haversine_km(pts[i], {40.0, -80.0});
      e[i] = noise(rng);
    }
    HacConfig exact_cfg;
    const auto exact = spatial_hac_se(pts, x, e, exact_cfg);
    REQUIRE_FALSE(exact.subsampled);
    HacConfig capped = exact_cfg;
    capped.max_pairs_subsample = exact.pairs_within_bandwidth / 4;
    capped.seed = 99;
    const auto sub = spatial_hac_se(pts, x, e, capped);
    REQUIRE(sub.subsampled);
    REQUIRE(sub.se_hac == spatial_hac_se(pts, x, e, capped).se_hac);  // deterministic
    REQUIRE(sub.se_hac == Approx(exact.se_hac).epsilon(0.5));
    REQUIRE(sub.se_hac >= 0.0);
  }
}

TEST_CASE("specification test") {
  SECTION("noiseless exponential data leaves nothing to detect") {
    SyntheticSpec spec;
    spec.noise_sd = 0.0;
    spec.n = 5000;
    spec.seed = 41;
    const auto data = generate(spec);
    const auto fit = fit_exponential(data.sample);
    BootstrapConfig boot;
    boot.B = 25;
    boot.seed = 9;
    const auto r = specification_test(data.sample, fit, {}, boot);
    REQUIRE(r.T_n <= 1e-6);  // only floating-point dust remains
    REQUIRE(r.p_value >= 0.0);
    REQUIRE(r.p_value <= 1.0);
  }

  SECTION("misspecified quadratic-exponent DGP is rejected hard") {
    SyntheticSpec spec;
    spec.form = SyntheticSpec::Form::quadratic_exponent;
    spec.noise_sd = 0.2;
    spec.n = 30000;
    spec.seed = 55;
    const auto data = generate(spec);
    const auto fit = fit_exponential(data.sample);
    BootstrapConfig boot;
    boot.B = 99;
    boot.seed = 10;
    const auto r = specification_test(data.sample, fit, {}, boot);
    REQUIRE(r.p_value < 0.05);
    REQUIRE(r.reject_at_05);
    REQUIRE(r.T_n > 0.0);
  }

  SECTION("deterministic under the seed") {
    SyntheticSpec spec;
    spec.noise_sd = 0.15;
    spec.noise_law = SyntheticSpec::NoiseLaw::lognormal;
    spec.n = 4000;
    spec.seed = 77;
    const auto data = generate(spec);
    const auto fit = fit_exponential(data.sample);
    BootstrapConfig boot;
    boot.B = 30;
    boot.seed = 123;
    const auto a = specification_test(data.sample, fit, {}, boot);
    const auto b = specification_test(data.sample, fit, {}, boot);
    REQUIRE(a.T_n == b.T_n);
    REQUIRE(a.p_value == b.p_value);
  }
}
