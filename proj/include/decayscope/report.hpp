#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>

#include <json.hpp>

#include "decayscope/boundary.hpp"
#include "decayscope/inference.hpp"
#include "decayscope/ingest.hpp"
#include "decayscope/kernels.hpp"
#include "decayscope/metrics.hpp"
#include "decayscope/parametric.hpp"

namespace decayscope {

using json = nlohmann::json;

inline std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw InvalidInputError("cannot open for writing: " + path);
  f << content;
  if (!f) throw InvalidInputError("short write to " + path);
}

inline json to_json(const Bandwidth& bw) {
  return json{{"h_km", bw.h}, {"method", bandwidth_method_name(bw.method)}};
}

inline json to_json(const SummaryStats& s) {
  return json{{"n", s.n},
              {"mean", s.mean},
              {"sd", s.sd},
              {"min_distance_km", s.min_distance},
              {"max_distance_km", s.max_distance}};
}

inline json to_json(const BoundaryEstimate& b) {
  json j{{"epsilon", b.epsilon},
         {"threshold_level", b.threshold_level},
         {"d_star", b.d_star ? json(*b.d_star) : json(nullptr)},
         {"d_lo", b.d_star_lower ? json(*b.d_star_lower) : json(nullptr)},
         {"d_hi", b.d_star_upper ? json(*b.d_star_upper) : json(nullptr)},
         {"interpolated", b.interpolated},
         {"monotone_violations", b.monotonicity.increasing_steps},
         {"monotone_violation_share", b.monotonicity.increasing_share()},
         {"method", b.method == BoundaryMethod::parametric ? "parametric" : "nonparametric"},
         {"ci", b.ci ? json{{"lo", b.ci->first}, {"hi", b.ci->second}} : json(nullptr)}};
  if (b.no_crossing == NoCrossing::beyond_grid) j["no_crossing"] = "beyond_d_max";
  return j;
}

inline json to_json(const ExponentialFit& f) {
  return json{{"A", f.A},
              {"kappa", f.kappa},
              {"se_iid", f.se_kappa_iid},
              {"r2", f.r2},
              {"r2_level", f.r2_level},
              {"n_used", f.n_used},
              {"n_dropped", f.n_dropped_nonpositive},
              {"group_fe", f.group_fe}};
}

inline ExponentialFit exponential_fit_from_json(const json& j) {
  ExponentialFit f;
  f.A = j.at("A").get<double>();
  f.kappa = j.at("kappa").get<double>();
  f.intercept = std::log(f.A);
  f.se_kappa_iid = j.at("se_iid").get<double>();
  f.r2 = j.at("r2").get<double>();
  f.r2_level = j.value("r2_level", 0.0);
  f.n_used = j.at("n_used").get<std::size_t>();
  f.n_dropped_nonpositive = j.at("n_dropped").get<std::size_t>();
  f.group_fe = j.value("group_fe", false);
  return f;
}

inline json to_json(const SpecTestResult& r) {
  return json{{"T_n", r.T_n},          {"p_value", r.p_value},
              {"B_used", r.B_used},    {"h_km", r.h},
              {"reject_at_10", r.reject_at_10}, {"reject_at_05", r.reject_at_05},
              {"reject_at_01", r.reject_at_01}};
}

inline json to_json(const HacResult& r) {
  return json{{"se_hac", r.se_hac},
              {"se_hc0", r.se_hc0},
              {"se_iid", r.se_iid},
              {"ratio_hac_iid", r.se_iid > 0.0 ? r.se_hac / r.se_iid : 0.0},
              {"pairs_within_bandwidth", r.pairs_within_bandwidth},
              {"subsampled", r.subsampled},
              {"nonneg_clamped", r.nonneg_clamped}};
}

inline json to_json(const PlugInCi& ci) {
  return json{{"lo", ci.lo},
              {"hi", ci.hi},
              {"V", ci.variance.V},
              {"B_n", ci.variance.B_n},
              {"components",
               json{{"sigma2_at_dstar", ci.variance.sigma2_at_dstar},
                    {"m_prime_at_dstar", ci.variance.m_prime_at_dstar},
                    {"m_double_prime_at_dstar", ci.variance.m_double_prime_at_dstar},
                    {"f_at_dstar", ci.variance.f_at_dstar},
                    {"mu2", ci.variance.mu2},
                    {"nu0", ci.variance.nu0},
                    {"h_km", ci.variance.h},
                    {"n", ci.variance.n}}}};
}

inline json to_json(const BootstrapBoundaryResult& r) {
  return json{{"lo", r.lo},
              {"hi", r.hi},
              {"replicates_with_crossing", r.replicate_values.size()},
              {"replicates_without_crossing", r.n_no_crossing},
              {"unreliable", r.unreliable}};
}

inline json curve_meta_json(const DecayCurve& curve) {
  return json{{"h_km", curve.h.h},
              {"bandwidth_method", bandwidth_method_name(curve.h.method)},
              {"kernel", curve.kernel.name()},
              {"order", curve.order},
              {"n", curve.n}};
}

inline void write_curve_csv(const DecayCurve& curve, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvalidInputError("cannot open for writing: " + path);
  f << "d_km,m_hat,m_prime_hat,f_hat,sigma2_hat\n";
  char buf[256];
  for (std::size_t i = 0; i < curve.grid.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g,%.10g\n", curve.grid[i],
                  curve.m_hat[i], curve.m_prime_hat[i], curve.f_hat[i], curve.sigma2_hat[i]);
    f << buf;
  }
  if (!f) throw InvalidInputError("short write to " + path);
}

inline DecayCurve read_curve_csv(const std::string& csv_path, const std::string& meta_path) {
  std::ifstream f(csv_path);
  if (!f) throw InvalidInputError("cannot open: " + csv_path);
  std::string line;
  if (!std::getline(f, line) || detail::trim(line) != "d_km,m_hat,m_prime_hat,f_hat,sigma2_hat")
    throw InvalidInputError(csv_path + ": not a decay curve CSV");
  DecayCurve curve;
  while (std::getline(f, line)) {
    const std::string_view sv = detail::trim(line);
    if (sv.empty()) continue;
    std::string_view fields[5];
    double v[5];
    if (!detail::split_fields(sv, fields)) throw InvalidInputError(csv_path + ": malformed row");
    for (int k = 0; k < 5; ++k)
      if (!detail::parse_double(fields[k], v[k])) {
        v[k] = std::numeric_limits<double>::quiet_NaN();  // m_prime may be nan for order 0
        if (k != 2) throw InvalidInputError(csv_path + ": malformed number");
      }
    curve.grid.push_back(v[0]);
    curve.m_hat.push_back(v[1]);
    curve.m_prime_hat.push_back(v[2]);
    curve.f_hat.push_back(v[3]);
    curve.sigma2_hat.push_back(v[4]);
  }
  std::ifstream mf(meta_path);
  if (!mf) throw InvalidInputError("cannot open: " + meta_path);
  json meta = json::parse(mf);
  curve.h.h = meta.at("h_km").get<double>();
  const std::string bm = meta.value("bandwidth_method", "fixed");
  curve.h.method = bm == "silverman" ? BandwidthMethod::silverman
                   : bm == "cross_validation" ? BandwidthMethod::cross_validation
                                              : BandwidthMethod::fixed;
  curve.kernel = KernelSpec::from_name(meta.at("kernel").get<std::string>());
  curve.order = meta.at("order").get<int>();
  curve.n = meta.at("n").get<std::size_t>();
  curve.validate();
  return curve;
}

inline void write_comparison_csv(const ComparisonReport& report, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvalidInputError("cannot open for writing: " + path);
  f << "center_km,half_width_km,n,actual_mean,pred_parametric,pred_nonparametric,"
       "mae_parametric_pct,mae_nonparametric_pct,improvement_pp\n";
  char buf[320];
  auto opt = [](const std::optional<double>& v) { return v ? *v : std::nan(""); };
  for (const auto& b : report.bins) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  b.center_km, b.half_width_km, b.n_in_bin, opt(b.actual_mean),
                  opt(b.pred_parametric), opt(b.pred_nonparametric), opt(b.mae_parametric_pct),
                  opt(b.mae_nonparametric_pct), opt(b.improvement_pp));
    f << buf;
  }
  if (!f) throw InvalidInputError("short write to " + path);
}

inline json to_json(const ComparisonReport& r) {
  return json{{"overall",
               json{{"mae_parametric_pct", r.overall_mae_parametric},
                    {"mae_nonparametric_pct", r.overall_mae_nonparametric},
                    {"improvement_pp", r.overall_improvement_pp},
                    {"mae_parametric_pct_weighted", r.overall_mae_parametric_weighted},
                    {"mae_nonparametric_pct_weighted", r.overall_mae_nonparametric_weighted},
                    {"r2_parametric", r.r2_parametric}}},
              {"n_uncovered", r.n_uncovered}};
}

inline json to_json(const std::vector<PeriodSummaryRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows)
    arr.push_back(json{{"period", r.period},
                       {"n", r.n},
                       {"mean", r.mean_outcome},
                       {"pct_change_from_previous", r.pct_change_from_previous
                                                        ? json(*r.pct_change_from_previous)
                                                        : json(nullptr)}});
  return arr;
}

inline json to_json(const IngestStats& s) {
  json rejects = json::array();
  for (const auto& r : s.reject_examples)
    rejects.push_back(json{{"line", r.line}, {"reason", r.reason}});
  return json{{"rows_in", s.rows_in},
              {"rows_kept", s.rows_kept},
              {"rows_filtered", s.rows_filtered},
              {"rows_rejected", s.rows_rejected},
              {"reject_examples", rejects}};
}

}  // namespace decayscope
