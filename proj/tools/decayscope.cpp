// decayscope: spatial decay and treatment-boundary estimation CLI.
//
// Subcommands: simulate, ingest, fit, boundary, compare, spec-test.
// Every artifact is written next to a manifest (inputs, config hash, version);
// result tables themselves carry no timestamps, so a rerun with the same
// config and seed is byte-identical.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "decayscope/decayscope.hpp"
#include "decayscope/report.hpp"

namespace fs = std::filesystem;
using decayscope::json;

namespace {

json make_manifest(const std::string& command, const json& config,
                   const std::vector<std::string>& inputs) {
  json j;
  j["command"] = command;
  j["version"] = decayscope::kVersion;
  j["inputs"] = inputs;
  j["config"] = config;
  j["config_hash"] = decayscope::fnv1a_hex(config.dump());
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  j["created_utc"] = buf;
  return j;
}

void write_manifest(const fs::path& artifact, const std::string& command, const json& config,
                    const std::vector<std::string>& inputs) {
  fs::path p = artifact;
  p += ".manifest.json";
  decayscope::write_text_file(p.string(), make_manifest(command, config, inputs).dump(2) + "\n");
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == ',') {
      if (i > start) out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& tok : split_csv_list(s)) out.push_back(std::stod(tok));
  return out;
}

// ---- shared option blocks --------------------------------------------------

struct IngestArgs {
  std::string obs_path;
  std::string sources_path;
  double max_km = 100.0;
  std::string groups;
  std::string periods;
  double min_outcome = std::numeric_limits<double>::quiet_NaN();
  std::size_t chunk_rows = 5'000'000;
  double bucket_deg = 1.0;

  void add_flags(CLI::App* cmd, bool required) {
    auto* o = cmd->add_option("--obs", obs_path, "observation CSV (lat,lon,period,group,outcome)");
    auto* s = cmd->add_option("--sources", sources_path, "source CSV (id,lat,lon)");
    if (required) {
      o->required();
      s->required();
    }
    cmd->add_option("--max-km", max_km, "keep observations within this distance of a source");
    cmd->add_option("--groups", groups, "comma-separated allow-list of group labels");
    cmd->add_option("--periods", periods, "comma-separated allow-list of period labels");
    cmd->add_option("--min-outcome", min_outcome, "drop outcomes below this value");
    cmd->add_option("--chunk-rows", chunk_rows, "rows per streaming chunk")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--bucket-deg", bucket_deg, "nearest-source bucket cell size, degrees");
  }

  decayscope::FilterConfig filter() const {
    decayscope::FilterConfig f;
    f.max_distance_km = max_km;
    if (!groups.empty()) {
      f.allowed_groups.emplace();
      for (auto& g : split_csv_list(groups)) f.allowed_groups->insert(g);
    }
    if (!periods.empty()) {
      f.allowed_periods.emplace();
      for (auto& p : split_csv_list(periods)) f.allowed_periods->insert(p);
    }
    if (!std::isnan(min_outcome)) f.min_outcome = min_outcome;
    return f;
  }

  json config_json() const {
    return json{{"obs", obs_path},       {"sources", sources_path}, {"max_km", max_km},
                {"groups", groups},      {"periods", periods},
                {"min_outcome", std::isnan(min_outcome) ? json(nullptr) : json(min_outcome)},
                {"chunk_rows", chunk_rows}, {"bucket_deg", bucket_deg}};
  }

  decayscope::IngestResult run(bool keep_locations = false) const {
    const auto sources = decayscope::load_sources_csv(sources_path, bucket_deg);
    decayscope::IngestOptions options;
    options.keep_locations = keep_locations;
    return decayscope::stream_ingest(obs_path, sources, filter(), chunk_rows, options);
  }
};

struct FitArgs {
  std::string kernel_name = "epanechnikov";
  std::string bandwidth = "silverman";  // silverman | cv | <km>
  std::string cv_candidates;
  std::size_t cv_folds = 5;
  int order = 1;
  double grid_min = 0.0;
  double grid_max = -1.0;  // < 0: use the sample support
  std::size_t grid_points = 0;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--kernel", kernel_name, "epanechnikov | gaussian | uniform");
    cmd->add_option("--bandwidth", bandwidth, "silverman | cv | fixed value in km");
    cmd->add_option("--cv-candidates", cv_candidates, "comma-separated bandwidths for cv");
    cmd->add_option("--cv-folds", cv_folds, "cross-validation folds")->check(CLI::PositiveNumber);
    cmd->add_option("--p", order, "local polynomial order")->check(CLI::Range(0, 2));
    cmd->add_option("--grid-min", grid_min, "evaluation grid start, km");
    cmd->add_option("--grid-max", grid_max, "evaluation grid end, km (default: sample support)");
    cmd->add_option("--grid-points", grid_points, "evaluation grid size (default: 1 km spacing)");
  }

  decayscope::GridSpec grid(double d_max) const {
    decayscope::GridSpec g = decayscope::GridSpec::default_for(grid_max > 0.0 ? grid_max : d_max);
    g.d_min = grid_min;
    if (grid_points > 0) g.points = grid_points;
    return g;
  }

  decayscope::Bandwidth pick_bandwidth(const decayscope::DistancedSample& sample) const {
    if (bandwidth == "silverman") return decayscope::silverman_bandwidth(sample);
    const auto kernel = decayscope::KernelSpec::from_name(kernel_name);
    if (bandwidth == "cv") {
      std::vector<double> hs;
      if (!cv_candidates.empty()) {
        hs = parse_double_list(cv_candidates);
      } else {
        const double h0 = decayscope::silverman_bandwidth(sample).h;
        hs = {h0 / 4.0, h0 / 2.0, h0, 2.0 * h0, 4.0 * h0};
      }
      return decayscope::cv_bandwidth(sample, hs, kernel, order, cv_folds);
    }
    return {std::stod(bandwidth), decayscope::BandwidthMethod::fixed};
  }

  json config_json() const {
    return json{{"kernel", kernel_name},   {"bandwidth", bandwidth},
                {"cv_candidates", cv_candidates}, {"cv_folds", cv_folds},
                {"order", order},          {"grid_min", grid_min},
                {"grid_max", grid_max},    {"grid_points", grid_points}};
  }
};

// ---- subcommand state -------------------------------------------------------

struct SimulateCmd {
  std::string form = "exponential";
  double A = 2.28, kappa = 0.00701, a = 0.0075, b = 0.00002;
  double kappa_near = 0.00685, kappa_far = -0.00042, break_km = 100.0;
  std::size_t n = 100000;
  double noise_sd = 0.2;
  std::string noise_law = "additive";
  std::string law = "uniform";
  double d_max = 100.0;
  std::uint64_t seed = 0;
  double source_lat = 40.0, source_lon = -80.0;
  bool spatial = false;
  double extent_km = 300.0, range_km = 25.0;
  std::string out;
  std::string out_sources;
  std::string period = "2019";

  decayscope::SyntheticSpec spec() const {
    decayscope::SyntheticSpec s;
    if (form == "exponential") s.form = decayscope::SyntheticSpec::Form::exponential;
    else if (form == "quadexp") s.form = decayscope::SyntheticSpec::Form::quadratic_exponent;
    else if (form == "two-regime") s.form = decayscope::SyntheticSpec::Form::two_regime;
    else throw CLI::ValidationError("--form", "unknown decay form '" + form + "'");
    s.A = A;
    s.kappa = kappa;
    s.a = a;
    s.b = b;
    s.kappa_near = kappa_near;
    s.kappa_far = kappa_far;
    s.break_km = break_km;
    s.n = n;
    s.noise_sd = noise_sd;
    s.noise_law = noise_law == "lognormal" ? decayscope::SyntheticSpec::NoiseLaw::lognormal
                                           : decayscope::SyntheticSpec::NoiseLaw::additive_gaussian;
    s.distance_law = law == "ring" ? decayscope::SyntheticSpec::DistanceLaw::ring
                                   : decayscope::SyntheticSpec::DistanceLaw::uniform;
    s.d_max = d_max;
    s.seed = seed;
    return s;
  }

  json config_json() const {
    return json{{"form", form},          {"A", A},
                {"kappa", kappa},        {"a", a},
                {"b", b},                {"kappa_near", kappa_near},
                {"kappa_far", kappa_far},{"break_km", break_km},
                {"n", n},                {"noise_sd", noise_sd},
                {"noise_law", noise_law},{"law", law},
                {"d_max", d_max},        {"seed", seed},
                {"source_lat", source_lat}, {"source_lon", source_lon},
                {"spatial", spatial},    {"extent_km", extent_km},
                {"range_km", range_km},  {"period", period}};
  }

  int run() {
    const auto sspec = spec();
    const decayscope::GeoPoint source = decayscope::validated_point(source_lat, source_lon);
    std::vector<decayscope::ObservationRecord> records;
    if (spatial) {
      auto result = decayscope::generate_spatial(sspec, {source}, extent_km, range_km, period);
      records = std::move(result.observations);
    } else {
      const auto data = decayscope::generate(sspec);
      records.resize(sspec.n);
      auto rng = decayscope::make_engine(decayscope::derive_seed(seed, 0x9e0u));
      std::uniform_real_distribution<double> bearing(0.0, 2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < sspec.n; ++i) {
        const auto p =
            decayscope::destination_point(source, data.sample.distances[i], bearing(rng));
        records[i] = {p, period, "", data.sample.outcomes[i]};
      }
    }
    decayscope::write_observations_csv(records, out);
    if (out_sources.empty()) {
      fs::path sp(out);
      sp.replace_filename(sp.stem().string() + "_sources.csv");
      out_sources = sp.string();
    }
    decayscope::write_text_file(
        out_sources, "id,lat,lon\nS1," + std::to_string(source.lat) + "," +
                         std::to_string(source.lon) + "\n");
    write_manifest(out, "simulate", config_json(), {});
    std::cout << "wrote " << records.size() << " observations to " << out << "\n"
              << "wrote source list to " << out_sources << "\n";
    return 0;
  }
};

struct IngestCmd {
  IngestArgs ingest;
  std::string out;
  std::string summary_out;
  std::string period_summary_out;

  int run() {
    auto result = ingest.run();
    decayscope::write_dsmp(result.sample, out);
    write_manifest(out, "ingest", ingest.config_json(),
                   {ingest.obs_path, ingest.sources_path});
    const auto stats = decayscope::summarize(result.sample);
    json report = decayscope::to_json(result.stats);
    report["summary"] = decayscope::to_json(stats);
    if (!summary_out.empty()) decayscope::write_text_file(summary_out, report.dump(2) + "\n");
    if (!period_summary_out.empty()) {
      std::vector<std::pair<std::string, decayscope::PeriodAccumulator>> rows(
          result.stats.by_period.begin(), result.stats.by_period.end());
      std::sort(rows.begin(), rows.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      json arr = json::array();
      std::optional<double> prev;
      for (const auto& [label, acc] : rows) {
        const double m = acc.outcome_sum.value() / static_cast<double>(acc.n);
        json row{{"period", label}, {"n", acc.n}, {"mean", m}};
        row["pct_change_from_previous"] =
            prev && *prev != 0.0 ? json((m - *prev) / *prev * 100.0) : json(nullptr);
        arr.push_back(row);
        prev = m;
      }
      decayscope::write_text_file(period_summary_out, arr.dump(2) + "\n");
    }
    std::cout << "kept " << result.stats.rows_kept << " of " << result.stats.rows_in
              << " rows (" << result.stats.rows_filtered << " filtered, "
              << result.stats.rows_rejected << " rejected); n = " << result.sample.n()
              << ", outcome mean " << stats.mean << "\n";
    return 0;
  }
};

struct FitCmd {
  IngestArgs ingest;
  FitArgs fit;
  std::string sample_path;
  std::string out_dir = ".";
  double hac_bw_km = 0.0;  // > 0 turns on spatial HAC SEs (needs --obs)
  std::uint64_t hac_max_pairs = 20'000'000;
  std::uint64_t hac_seed = 0;

  int run() {
    const bool want_hac = hac_bw_km > 0.0;
    decayscope::DistancedSample sample;
    std::vector<decayscope::GeoPoint> locations;
    std::vector<std::string> inputs;
    if (!sample_path.empty()) {
      if (want_hac) {
        std::cerr << "usage error: --hac-bw-km needs --obs/--sources (binary samples carry no "
                     "coordinates)\n";
        return 2;
      }
      sample = decayscope::read_dsmp(sample_path);
      inputs = {sample_path};
    } else if (!ingest.obs_path.empty() && !ingest.sources_path.empty()) {
      auto result = ingest.run(want_hac);
      sample = std::move(result.sample);
      locations = std::move(result.locations);
      inputs = {ingest.obs_path, ingest.sources_path};
    } else {
      std::cerr << "usage error: fit needs either --sample or --obs with --sources\n";
      return 2;
    }

    const auto kernel = decayscope::KernelSpec::from_name(fit.kernel_name);
    const auto bw = fit.pick_bandwidth(sample);
    const auto grid = fit.grid(sample.d_max);
    const auto curve = decayscope::fit_decay_curve(sample, grid, bw, kernel, fit.order);
    const auto exp_fit = decayscope::fit_exponential(sample);

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    decayscope::write_curve_csv(curve, (dir / "curve.csv").string());
    decayscope::write_text_file((dir / "curve_meta.json").string(),
                                decayscope::curve_meta_json(curve).dump(2) + "\n");
    json fit_json = decayscope::to_json(exp_fit);

    if (want_hac) {
      // spatially robust SE for the log-linear slope, positive outcomes only
      std::vector<decayscope::GeoPoint> pts;
      std::vector<double> dist, resid;
      for (std::size_t i = 0; i < sample.n(); ++i) {
        if (!(sample.outcomes[i] > 0.0)) continue;
        pts.push_back(locations[i]);
        dist.push_back(sample.distances[i]);
        resid.push_back(std::log(sample.outcomes[i]) -
                        (exp_fit.intercept - exp_fit.kappa * sample.distances[i]));
      }
      decayscope::HacConfig cfg;
      cfg.bandwidth_km = hac_bw_km;
      cfg.max_pairs_subsample = hac_max_pairs;
      cfg.seed = hac_seed;
      const auto hac = decayscope::spatial_hac_se(pts, dist, resid, cfg);
      json hj = decayscope::to_json(hac);
      hj["bandwidth_km"] = hac_bw_km;
      decayscope::write_text_file((dir / "hac.json").string(), hj.dump(2) + "\n");
      fit_json["se_hac"] = hac.se_hac;
      std::cout << "spatial HAC SE(kappa) = " << hac.se_hac << " (iid " << hac.se_iid
                << ", ratio " << hac.se_hac / hac.se_iid << ")\n";
    }

    decayscope::write_text_file((dir / "exponential_fit.json").string(),
                                fit_json.dump(2) + "\n");
    json config = fit.config_json();
    config["ingest"] = ingest.config_json();
    config["sample"] = sample_path;
    config["hac_bw_km"] = hac_bw_km;
    write_manifest(dir / "curve.csv", "fit", config, inputs);
    std::cout << "fit curve on " << curve.grid.size() << " grid points, h = " << bw.h
              << " km (" << decayscope::bandwidth_method_name(bw.method) << "); parametric kappa = "
              << exp_fit.kappa << " (A = " << exp_fit.A << ", R2 = " << exp_fit.r2 << ")\n";
    return 0;
  }
};

struct BoundaryCmd {
  std::string curve_path;
  std::string meta_path;
  std::string fit_path;
  std::string sample_path;
  std::string method = "nonparametric";
  std::vector<double> epsilons{0.5};
  bool no_interpolate = false;
  std::string ci = "none";  // none | bootstrap | plugin
  std::size_t boot_b = 50;
  std::size_t boot_nb = 50000;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  std::string out;

  int run() {
    json results = json::array();
    std::vector<std::string> inputs;

    if (method == "parametric") {
      if (fit_path.empty()) {
        std::cerr << "usage error: --method parametric needs --fit\n";
        return 2;
      }
      std::ifstream f(fit_path);
      if (!f) throw decayscope::InvalidInputError("cannot open: " + fit_path);
      const auto fit = decayscope::exponential_fit_from_json(json::parse(f));
      inputs.push_back(fit_path);
      for (double eps : epsilons)
        results.push_back(decayscope::to_json(decayscope::parametric_boundary(fit, eps)));
    } else {
      if (curve_path.empty()) {
        std::cerr << "usage error: boundary needs --curve (or --method parametric)\n";
        return 2;
      }
      if (meta_path.empty()) {
        fs::path mp(curve_path);
        mp.replace_filename(mp.stem().string() + "_meta.json");
        meta_path = mp.string();
      }
      const auto curve = decayscope::read_curve_csv(curve_path, meta_path);
      inputs = {curve_path, meta_path};
      for (double eps : epsilons) {
        auto est = decayscope::estimate_boundary(curve, eps, !no_interpolate);
        json extra;
        if (ci == "plugin" && est.d_star) {
          const auto pci = decayscope::plug_in_ci(curve, est, alpha);
          est.ci = {pci.lo, pci.hi};
          extra = decayscope::to_json(pci);
        } else if (ci == "bootstrap") {
          if (sample_path.empty()) {
            std::cerr << "usage error: --ci bootstrap needs --sample\n";
            return 2;
          }
          const auto sample = decayscope::read_dsmp(sample_path);
          inputs.push_back(sample_path);
          decayscope::BoundaryPipelineConfig pipe;
          pipe.grid = decayscope::GridSpec{curve.grid.front(), curve.grid.back(),
                                           curve.grid.size()};
          pipe.kernel = curve.kernel;
          pipe.order = curve.order;
          pipe.epsilon = eps;
          pipe.interpolate = !no_interpolate;
          if (curve.h.method == decayscope::BandwidthMethod::fixed) pipe.fixed_h = curve.h.h;
          decayscope::BootstrapConfig boot{boot_b, boot_nb, seed, alpha};
          const auto bres = decayscope::bootstrap_boundary_ci(sample, pipe, boot);
          est.ci = {bres.lo, bres.hi};
          extra = decayscope::to_json(bres);
        }
        json j = decayscope::to_json(est);
        if (!extra.is_null()) j["ci_detail"] = extra;
        results.push_back(j);
      }
    }

    const json payload = results.size() == 1 ? results[0] : results;
    const std::string text = payload.dump(2) + "\n";
    if (out.empty()) {
      std::cout << text;
    } else {
      decayscope::write_text_file(out, text);
      json config{{"curve", curve_path}, {"meta", meta_path},   {"fit", fit_path},
                  {"sample", sample_path}, {"method", method},  {"epsilon", epsilons},
                  {"interpolate", !no_interpolate}, {"ci", ci}, {"boot_b", boot_b},
                  {"boot_nb", boot_nb},   {"seed", seed},       {"alpha", alpha}};
      write_manifest(out, "boundary", config, inputs);
      std::cout << "wrote " << out << "\n";
    }
    return 0;
  }
};

struct CompareCmd {
  std::string sample_path;
  std::string curve_path;
  std::string meta_path;
  std::string fit_path;
  std::string bins = "10,25,50,75,100";
  double half_width = 5.0;
  std::string out_dir = ".";

  int run() {
    const auto sample = decayscope::read_dsmp(sample_path);
    if (meta_path.empty()) {
      fs::path mp(curve_path);
      mp.replace_filename(mp.stem().string() + "_meta.json");
      meta_path = mp.string();
    }
    const auto curve = decayscope::read_curve_csv(curve_path, meta_path);
    std::ifstream f(fit_path);
    if (!f) throw decayscope::InvalidInputError("cannot open: " + fit_path);
    const auto fit = decayscope::exponential_fit_from_json(json::parse(f));
    const auto centers = parse_double_list(bins);
    const auto report = decayscope::compare_methods(sample, fit, curve, centers, half_width);

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    decayscope::write_comparison_csv(report, (dir / "comparison.csv").string());
    decayscope::write_text_file((dir / "comparison.json").string(),
                                decayscope::to_json(report).dump(2) + "\n");
    json config{{"sample", sample_path}, {"curve", curve_path},      {"fit", fit_path},
                {"bins", bins},          {"half_width", half_width}};
    write_manifest(dir / "comparison.csv", "compare", config,
                   {sample_path, curve_path, meta_path, fit_path});
    std::cout << "overall MAE%: parametric " << report.overall_mae_parametric
              << ", nonparametric " << report.overall_mae_nonparametric << " (improvement "
              << report.overall_improvement_pp << " pp)\n";
    return 0;
  }
};

struct SpecTestCmd {
  std::string sample_path;
  FitArgs fit;
  std::size_t boot_b = 99;
  std::uint64_t seed = 0;
  std::string out;

  int run() {
    const auto sample = decayscope::read_dsmp(sample_path);
    const auto exp_fit = decayscope::fit_exponential(sample);
    decayscope::SpecTestConfig cfg;
    cfg.kernel = decayscope::KernelSpec::from_name(fit.kernel_name);
    cfg.order = fit.order;
    if (fit.bandwidth != "silverman" && fit.bandwidth != "cv")
      cfg.fixed_h = std::stod(fit.bandwidth);
    decayscope::BootstrapConfig boot;
    boot.B = boot_b;
    boot.seed = seed;
    const auto result = decayscope::specification_test(sample, exp_fit, cfg, boot);
    json j = decayscope::to_json(result);
    j["fit"] = decayscope::to_json(exp_fit);
    const std::string text = j.dump(2) + "\n";
    if (out.empty()) {
      std::cout << text;
    } else {
      decayscope::write_text_file(out, text);
      json config{{"sample", sample_path}, {"boot_b", boot_b}, {"seed", seed},
                  {"kernel", fit.kernel_name}, {"order", fit.order},
                  {"bandwidth", fit.bandwidth}};
      write_manifest(out, "spec-test", config, {sample_path});
      std::cout << "T_n = " << result.T_n << ", p = " << result.p_value << "; wrote " << out
                << "\n";
    }
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decayscope: spatial decay functions and treatment-effect boundaries"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file; command-line flags win");
  unsigned threads = 0;
  app.add_option("--threads", threads, "worker threads (default: logical cores)");

  SimulateCmd sim;
  auto* sim_cmd = app.add_subcommand("simulate", "generate synthetic observations with known truth");
  sim_cmd->add_option("--form", sim.form, "exponential | quadexp | two-regime");
  sim_cmd->add_option("--A", sim.A, "amplitude");
  sim_cmd->add_option("--kappa", sim.kappa, "exponential decay rate per km");
  sim_cmd->add_option("--a", sim.a, "quadexp linear coefficient");
  sim_cmd->add_option("--b", sim.b, "quadexp quadratic coefficient");
  sim_cmd->add_option("--kappa-near", sim.kappa_near, "two-regime near rate");
  sim_cmd->add_option("--kappa-far", sim.kappa_far, "two-regime far rate");
  sim_cmd->add_option("--break-km", sim.break_km, "two-regime break distance");
  sim_cmd->add_option("--n", sim.n, "observations")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--noise-sd", sim.noise_sd, "noise standard deviation");
  sim_cmd->add_option("--noise-law", sim.noise_law, "additive | lognormal");
  sim_cmd->add_option("--law", sim.law, "distance law: uniform | ring");
  sim_cmd->add_option("--d-max", sim.d_max, "distance support upper bound, km");
  sim_cmd->add_option("--seed", sim.seed, "RNG seed");
  sim_cmd->add_option("--source-lat", sim.source_lat, "source latitude");
  sim_cmd->add_option("--source-lon", sim.source_lon, "source longitude");
  sim_cmd->add_flag("--spatial", sim.spatial, "spatially correlated errors on a map");
  sim_cmd->add_option("--extent-km", sim.extent_km, "half-width of the spatial box");
  sim_cmd->add_option("--range-km", sim.range_km, "error correlation range");
  sim_cmd->add_option("--period", sim.period, "period label for the CSV");
  sim_cmd->add_option("--out", sim.out, "output observation CSV")->required();
  sim_cmd->add_option("--out-sources", sim.out_sources, "output source CSV");

  IngestCmd ing;
  auto* ing_cmd = app.add_subcommand("ingest", "stream observations into a binary sample");
  ing.ingest.add_flags(ing_cmd, /*required=*/true);
  ing_cmd->add_option("--out", ing.out, "output DSMP sample file")->required();
  ing_cmd->add_option("--summary", ing.summary_out, "write summary stats JSON here");
  ing_cmd->add_option("--period-summary", ing.period_summary_out,
                      "write per-period means and % changes here");

  FitCmd fitc;
  auto* fit_cmd = app.add_subcommand("fit", "estimate the decay curve and exponential baseline");
  fitc.ingest.add_flags(fit_cmd, /*required=*/false);
  fitc.fit.add_flags(fit_cmd);
  fit_cmd->add_option("--sample", fitc.sample_path, "DSMP sample from 'ingest'");
  fit_cmd->add_option("--out-dir", fitc.out_dir, "artifact directory");
  fit_cmd->add_option("--hac-bw-km", fitc.hac_bw_km,
                      "Bartlett bandwidth for spatial HAC SEs (0 = off; needs --obs)");
  fit_cmd->add_option("--hac-max-pairs", fitc.hac_max_pairs,
                      "pair cap before HAC switches to subsampling");
  fit_cmd->add_option("--hac-seed", fitc.hac_seed, "seed for HAC pair subsampling");

  BoundaryCmd bnd;
  auto* bnd_cmd = app.add_subcommand("boundary", "boundary distance from a fitted curve");
  bnd_cmd->add_option("--curve", bnd.curve_path, "curve CSV from 'fit'");
  bnd_cmd->add_option("--curve-meta", bnd.meta_path, "curve metadata JSON");
  bnd_cmd->add_option("--fit", bnd.fit_path, "exponential fit JSON (for --method parametric)");
  bnd_cmd->add_option("--sample", bnd.sample_path, "DSMP sample (for --ci bootstrap)");
  bnd_cmd->add_option("--method", bnd.method, "nonparametric | parametric");
  bnd_cmd->add_option("--epsilon", bnd.epsilons, "threshold(s) in (0,1)")
      ->check(CLI::Range(std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0)));
  bnd_cmd->add_flag("--no-interpolate", bnd.no_interpolate, "report the raw grid crossing");
  bnd_cmd->add_option("--ci", bnd.ci, "none | bootstrap | plugin");
  bnd_cmd->add_option("--boot-b", bnd.boot_b, "bootstrap replications");
  bnd_cmd->add_option("--boot-nb", bnd.boot_nb, "bootstrap subsample size");
  bnd_cmd->add_option("--seed", bnd.seed, "bootstrap seed");
  bnd_cmd->add_option("--alpha", bnd.alpha, "CI level");
  bnd_cmd->add_option("--out", bnd.out, "output JSON (default: stdout)");

  CompareCmd cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "per-bin MAE of parametric vs nonparametric");
  cmp_cmd->add_option("--sample", cmp.sample_path, "DSMP sample")->required();
  cmp_cmd->add_option("--curve", cmp.curve_path, "curve CSV")->required();
  cmp_cmd->add_option("--curve-meta", cmp.meta_path, "curve metadata JSON");
  cmp_cmd->add_option("--fit", cmp.fit_path, "exponential fit JSON")->required();
  cmp_cmd->add_option("--bins", cmp.bins, "comma-separated bin centers, km");
  cmp_cmd->add_option("--half-width", cmp.half_width, "bin half width, km");
  cmp_cmd->add_option("--out-dir", cmp.out_dir, "artifact directory");

  SpecTestCmd spc;
  auto* spc_cmd = app.add_subcommand("spec-test", "functional-form test of exponential decay");
  spc_cmd->add_option("--sample", spc.sample_path, "DSMP sample")->required();
  spc.fit.add_flags(spc_cmd);
  spc_cmd->add_option("--boot-b", spc.boot_b, "bootstrap replications");
  spc_cmd->add_option("--seed", spc.seed, "bootstrap seed");
  spc_cmd->add_option("--out", spc.out, "output JSON (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (threads > 0) decayscope::thread_budget().store(threads);

  try {
    if (sim_cmd->parsed()) return sim.run();
    if (ing_cmd->parsed()) return ing.run();
    if (fit_cmd->parsed()) return fitc.run();
    if (bnd_cmd->parsed()) return bnd.run();
    if (cmp_cmd->parsed()) return cmp.run();
    if (spc_cmd->parsed()) return spc.run();
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const decayscope::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
