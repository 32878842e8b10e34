// Acceptance suite: one deterministic pass/fail line per criterion.
//
//   decayscope_acceptance           runs everything
//   decayscope_acceptance 3 7      runs criteria 3 and 7
//
// Each criterion carries its own wall-clock budget; exceeding it fails the
// criterion even when the assertions hold.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "decayscope/decayscope.hpp"

using namespace decayscope;
namespace fs = std::filesystem;

namespace {

constexpr double kTrueBoundaryHalf = 98.87976898144726;  // ln 2 / 0.00701
constexpr double kEquatorialDegreeKm = 111.19492664455873;

struct Check {
  bool ok = true;
  std::ostringstream detail;

  template <typename T>
  void expect(bool cond, const char* what, const T& value) {
    if (!detail.str().empty()) detail << ", ";
    detail << what << " = " << value;
    if (!cond) {
      ok = false;
      detail << " [VIOLATED]";
    }
  }
};

SyntheticSpec exponential_spec(std::uint64_t seed, std::size_t n, double kappa = 0.00701,
                               double noise_sd = 0.2) {
  SyntheticSpec spec;
  spec.A = 2.28;
  spec.kappa = kappa;
  spec.noise_sd = noise_sd;
  spec.n = n;
  spec.seed = seed;
  return spec;
}

std::optional<double> boundary_of(const DistancedSample& sample, double epsilon) {
  const auto bw = silverman_bandwidth(sample);
  CurveOptions lean;
  lean.with_density = false;
  lean.with_variance = false;
  const auto curve = fit_decay_curve(sample, GridSpec::default_for(100.0), bw,
                                     KernelSpec::epanechnikov(), 1, lean);
  return estimate_boundary(curve, epsilon, true).d_star;
}

// ---- criterion bodies ------------------------------------------------------

// Interpolated nonparametric boundary recovers ln2/kappa on the reference DGP.
Check criterion1() {
  Check c;
  const auto data = generate(exponential_spec(7, 100000));
  const auto d = boundary_of(data.sample, 0.5);
  c.expect(d.has_value(), "crossing found", d.has_value());
  if (d) c.expect(std::abs(*d - kTrueBoundaryHalf) <= 2.0, "d_star", *d);
  return c;
}

// Local polynomial exactness on global polynomials, plus the OLS limit.
Check criterion2() {
  Check c;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unif(0.0, 100.0);
  std::vector<double> d(3000);
  for (auto& x : d) x = unif(rng);
  auto poly = [](int p, double x) {
    if (p == 0) return 0.8;
    if (p == 1) return 0.5 + 0.004 * x;
    return 0.9 - 0.006 * x + 0.00004 * x * x;
  };
  const auto grid = GridSpec::default_for(100.0).make();
  double worst = 0.0;
  for (int p = 0; p <= 2; ++p) {
    std::vector<double> y(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) y[i] = poly(p, d[i]);
    DistancedSample s;
    s.distances = d;
    s.outcomes = y;
    s.d_max = 100.0;
    const auto sorted = SortedSample::from(s);
    for (double h : {2.0, 7.0, 31.0, 150.0})
      for (double g : grid) {
        const auto fit = local_poly_fit(sorted, g, h, KernelSpec::epanechnikov(), p);
        worst = std::max(worst, std::abs(fit.beta[0] - poly(p, g)));
      }
  }
  c.expect(worst <= 1e-8, "max polynomial reproduction error", worst);

  // uniform kernel with h >= d_max equals global OLS
  std::vector<double> y(d.size());
  std::normal_distribution<double> noise(0.0, 0.4);
  for (std::size_t i = 0; i < d.size(); ++i) y[i] = 1.0 + 0.02 * d[i] + noise(rng);
  double dm = 0, ym = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    dm += d[i];
    ym += y[i];
  }
  dm /= static_cast<double>(d.size());
  ym /= static_cast<double>(d.size());
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    sxx += (d[i] - dm) * (d[i] - dm);
    sxy += (d[i] - dm) * (y[i] - ym);
  }
  const double slope = sxy / sxx, icept = ym - slope * dm;
  DistancedSample s;
  s.distances = d;
  s.outcomes = y;
  s.d_max = 100.0;
  const auto sorted = SortedSample::from(s);
  double worst_ols = 0.0;
  for (double g : {0.0, 25.0, 50.0, 75.0, 100.0}) {
    const auto fit = local_poly_fit(sorted, g, 150.0, KernelSpec::uniform(), 1);
    worst_ols = std::max(worst_ols, std::abs(fit.beta[0] - (icept + slope * g)));
    worst_ols = std::max(worst_ols, std::abs(fit.beta[1] - slope));
  }
  c.expect(worst_ols <= 1e-8, "max deviation from global OLS", worst_ols);
  return c;
}

// RMSE(d_star) shrinks at the nonparametric rate as n grows.
Check criterion3() {
  Check c;
  const std::size_t ns[] = {1000, 4000, 16000, 64000};
  const double true_d = std::log(2.0) / 0.02;  // interior boundary at 34.66 km
  std::vector<double> log_n, log_rmse;
  for (std::size_t k = 0; k < 4; ++k) {
    double sse = 0.0;
    std::size_t used = 0;
    for (int rep = 0; rep < 100; ++rep) {
      const auto data =
          generate(exponential_spec(3000 + 100 * k + static_cast<std::uint64_t>(rep), ns[k], 0.02));
      const auto d = boundary_of(data.sample, 0.5);
      if (!d) continue;
      sse += (*d - true_d) * (*d - true_d);
      ++used;
    }
    if (used < 95) {
      c.expect(false, "replicates with a crossing", used);
      return c;
    }
    log_n.push_back(std::log(static_cast<double>(ns[k])));
    log_rmse.push_back(0.5 * std::log(sse / static_cast<double>(used)));
  }
  double xm = 0, ym = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    xm += log_n[i];
    ym += log_rmse[i];
  }
  xm /= 4;
  ym /= 4;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    sxx += (log_n[i] - xm) * (log_n[i] - xm);
    sxy += (log_n[i] - xm) * (log_rmse[i] - ym);
  }
  const double slope = sxy / sxx;
  c.expect(slope >= -0.55 && slope <= -0.25, "log-log RMSE slope", slope);
  return c;
}

// Subsample-bootstrap 95% CI covers the true boundary.
Check criterion4() {
  Check c;
  BootstrapConfig boot;
  boot.B = 200;
  boot.n_b = 10000;
  BoundaryPipelineConfig pipe;
  pipe.epsilon = 0.5;
  int covered = 0, usable = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const auto data = generate(exponential_spec(40000 + static_cast<std::uint64_t>(rep), 100000));
    boot.seed = 91000 + static_cast<std::uint64_t>(rep);
    try {
      const auto ci = bootstrap_boundary_ci(data.sample, pipe, boot);
      ++usable;
      if (ci.lo <= kTrueBoundaryHalf && kTrueBoundaryHalf <= ci.hi) ++covered;
    } catch (const EstimationError&) {
      // no replicate crossed; counts against coverage via usable
    }
  }
  const double coverage = 100.0 * covered / 200.0;
  c.expect(usable >= 195, "usable replications", usable);
  c.expect(coverage >= 90.0 && coverage <= 100.0, "coverage %", coverage);
  return c;
}

// Specification test: size under the exponential null, power under the
// quadratic-exponent alternative.
Check criterion5() {
  Check c;
  SpecTestConfig cfg;

  int rejections = 0;
  BootstrapConfig boot;
  boot.B = 99;
  for (int rep = 0; rep < 200; ++rep) {
    SyntheticSpec spec = exponential_spec(60000 + static_cast<std::uint64_t>(rep), 20000);
    spec.noise_sd = 0.12;
    spec.noise_law = SyntheticSpec::NoiseLaw::lognormal;
    const auto data = generate(spec);
    const auto fit = fit_exponential(data.sample);
    boot.seed = 71000 + static_cast<std::uint64_t>(rep);
    if (specification_test(data.sample, fit, cfg, boot).p_value < 0.05) ++rejections;
  }
  const double size = 100.0 * rejections / 200.0;
  c.expect(size >= 1.0 && size <= 12.0, "size at 5% level (%)", size);

  int strong = 0;
  boot.B = 199;
  for (int rep = 0; rep < 20; ++rep) {
    SyntheticSpec spec;
    spec.form = SyntheticSpec::Form::quadratic_exponent;
    spec.noise_sd = 0.2;
    spec.n = 100000;
    spec.seed = 80000 + static_cast<std::uint64_t>(rep);
    const auto data = generate(spec);
    const auto fit = fit_exponential(data.sample);
    boot.seed = 81000 + static_cast<std::uint64_t>(rep);
    if (specification_test(data.sample, fit, cfg, boot).p_value < 0.01) ++strong;
  }
  c.expect(strong >= 19, "power: reps with p < 0.01 (of 20)", strong);
  return c;
}

// Misspecification comparison reproduces the U-shaped improvement profile.
Check criterion6() {
  Check c;
  SyntheticSpec spec;
  spec.form = SyntheticSpec::Form::quadratic_exponent;
  spec.noise_sd = 0.2;
  spec.n = 100000;
  spec.seed = 6;
  const auto data = generate(spec);
  const auto fit = fit_exponential(data.sample);
  const auto curve = fit_decay_curve(data.sample, GridSpec::default_for(100.0),
                                     silverman_bandwidth(data.sample), KernelSpec::epanechnikov(), 1);
  const auto report = compare_methods(data.sample, fit, curve, default_bin_centers(), 5.0);
  c.expect(report.overall_mae_nonparametric < report.overall_mae_parametric,
           "overall improvement (pp)", report.overall_improvement_pp);
  c.expect(*report.bins.front().improvement_pp > 0.0, "improvement at 10 km",
           *report.bins.front().improvement_pp);
  c.expect(*report.bins.back().improvement_pp > 0.0, "improvement at 100 km",
           *report.bins.back().improvement_pp);
  std::size_t argmin = 0;
  for (std::size_t b = 1; b < report.bins.size(); ++b)
    if (*report.bins[b].improvement_pp < *report.bins[argmin].improvement_pp) argmin = b;
  c.expect(argmin > 0 && argmin + 1 < report.bins.size(), "argmin bin center",
           report.bins[argmin].center_km);
  return c;
}

// Spatial HAC inflates under induced correlation and stays put under iid.
Check criterion7() {
  Check c;
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
  for (std::uint64_t rep = 0; rep < 20; ++rep)
    if (ratio_for(25.0, 7000 + rep) > 1.2) ++corr_above;
  c.expect(corr_above >= 11, "correlated reps with ratio > 1.2 (of 20)", corr_above);
  double iid_lo = 10.0, iid_hi = 0.0;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    const double r = ratio_for(0.05, 7500 + rep);
    iid_lo = std::min(iid_lo, r);
    iid_hi = std::max(iid_hi, r);
  }
  c.expect(iid_lo >= 0.8, "min iid ratio", iid_lo);
  c.expect(iid_hi <= 1.3, "max iid ratio", iid_hi);
  return c;
}

// Bucketed nearest-source queries are exact; the haversine reference value holds.
Check criterion8() {
  Check c;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> lat(-89.9, 89.9), lon(-180.0, 180.0);
  std::vector<SourceSet::Site> sites(50);
  std::vector<GeoPoint> source_pts(50);
  for (int i = 0; i < 50; ++i) {
    source_pts[i] = {lat(rng), lon(rng)};
    sites[i] = {"S" + std::to_string(i), source_pts[i]};
  }
  const SourceSet set(sites);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const GeoPoint q{lat(rng), lon(rng)};
    double brute = std::numeric_limits<double>::infinity();
    for (const auto& s : source_pts) brute = std::min(brute, haversine_km(q, s));
    worst = std::max(worst, std::abs(set.nearest_km(q) - brute));
  }
  c.expect(worst <= 1e-9, "max |bucketed - brute force| (km)", worst);
  const double eq = haversine_km({0.0, 0.0}, {0.0, 1.0});
  c.expect(std::abs(eq - kEquatorialDegreeKm) <= 1e-3, "equatorial degree (km)", eq);
  return c;
}

// stream_ingest output does not depend on the chunk size.
Check criterion9() {
  Check c;
  const fs::path dir = fs::temp_directory_path() / "decayscope_acceptance";
  fs::create_directories(dir);
  const std::string obs = (dir / "pipeline.csv").string();
  {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> bearing(0.0, 6.2831853), dist(0.0, 150.0),
        val(0.5, 3.0);
    std::vector<ObservationRecord> records(100000);
    const char* periods[] = {"2019", "2020", "2021"};
    for (std::size_t i = 0; i < records.size(); ++i) {
      const GeoPoint p = destination_point({40.0, -80.0}, dist(rng), bearing(rng));
      records[i] = {p, periods[i % 3], "WV", val(rng)};
    }
    write_observations_csv(records, obs);
  }
  const SourceSet sources({{"S1", {40.0, -80.0}}});
  FilterConfig filter;
  filter.max_distance_km = 100.0;
  const auto a = stream_ingest(obs, sources, filter, 1000);
  const auto b = stream_ingest(obs, sources, filter, 100000);
  bool equal = a.sample.n() == b.sample.n();
  for (std::size_t i = 0; equal && i < a.sample.n(); ++i)
    equal = a.sample.distances[i] == b.sample.distances[i] &&
            a.sample.outcomes[i] == b.sample.outcomes[i];
  c.expect(equal, "elementwise equality across chunk sizes", equal);
  c.expect(a.stats.rows_in == a.stats.rows_kept + a.stats.rows_filtered + a.stats.rows_rejected,
           "row conservation", a.stats.rows_in);
  return c;
}

struct Criterion {
  int id;
  const char* title;
  double budget_s;
  std::function<Check()> body;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "closed-form boundary recovery (exponential DGP, eps = 0.5)", 30.0, criterion1},
      {2, "local-polynomial exactness and the global-OLS limit", 5.0, criterion2},
      {3, "convergence rate of RMSE(d_star) in n", 600.0, criterion3},
      {4, "subsample-bootstrap CI coverage", 900.0, criterion4},
      {5, "specification-test size and power", 900.0, criterion5},
      {6, "misspecification comparison U-shape", 120.0, criterion6},
      {7, "spatial HAC ratios under correlated and iid errors", 600.0, criterion7},
      {8, "geo exactness (bucketed nearest, haversine reference)", 5.0, criterion8},
      {9, "ingest chunk-size invariance", 30.0, criterion9},
  };

  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  bool all_ok = true;
  for (const auto& crit : criteria) {
    if (!selected.empty() &&
        std::find(selected.begin(), selected.end(), crit.id) == selected.end())
      continue;
    const auto t0 = std::chrono::steady_clock::now();
    Check result;
    try {
      result = crit.body();
    } catch (const std::exception& e) {
      result.ok = false;
      result.detail << "exception: " << e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = elapsed < crit.budget_s;
    const bool ok = result.ok && in_budget;
    all_ok = all_ok && ok;
    std::printf("[%s] criterion %d: %s (%.1fs of %.0fs budget%s) - %s\n", ok ? "PASS" : "FAIL",
                crit.id, crit.title, elapsed, crit.budget_s,
                in_budget ? "" : ", OVER BUDGET", result.detail.str().c_str());
    std::fflush(stdout);
  }
  return all_ok ? 0 : 1;
}
