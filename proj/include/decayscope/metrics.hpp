#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "decayscope/errors.hpp"
#include "decayscope/kernels.hpp"
#include "decayscope/parametric.hpp"
#include "decayscope/sample.hpp"
#include "decayscope/stats.hpp"

namespace decayscope {

/// Per-bin accuracy of the two predictors against actual bin means.
struct ComparisonBin {
  double center_km = 0.0;
  double half_width_km = 0.0;
  std::size_t n_in_bin = 0;
  std::optional<double> actual_mean;
  std::optional<double> pred_parametric;
  std::optional<double> pred_nonparametric;
  std::optional<double> mae_parametric_pct;
  std::optional<double> mae_nonparametric_pct;
  std::optional<double> improvement_pp;  // parametric MAE - nonparametric MAE
};

struct ComparisonReport {
  std::vector<ComparisonBin> bins;
  double overall_mae_parametric = 0.0;      // unweighted mean over non-empty bins
  double overall_mae_nonparametric = 0.0;
  double overall_improvement_pp = 0.0;
  double overall_mae_parametric_weighted = 0.0;  // observation-weighted variant
  double overall_mae_nonparametric_weighted = 0.0;
  double r2_parametric = 0.0;
  std::size_t n_uncovered = 0;  // observations outside every bin
};

/// Head-to-head MAE% by distance bin. Predictions are evaluated at bin
/// centers; the nonparametric prediction interpolates the curve grid; actual
/// values are arithmetic means of raw outcomes in |D - center| <= half_width.
inline ComparisonReport compare_methods(const DistancedSample& sample, const ExponentialFit& fit,
                                        const DecayCurve& curve,
                                        std::span<const double> bin_centers,
                                        double half_width_km) {
  sample.validate();
  curve.validate();
  if (bin_centers.empty()) throw InvalidConfigError("need at least one bin center");
  if (!(half_width_km > 0.0)) throw InvalidConfigError("half width must be positive");
  for (double c : bin_centers)
    if (c < curve.grid.front() || c > curve.grid.back())
      throw InvalidConfigError("bin center " + std::to_string(c) +
                               " lies outside the curve grid");

  ComparisonReport report;
  report.r2_parametric = fit.r2;
  report.bins.resize(bin_centers.size());

  std::vector<CompensatedSum> sums(bin_centers.size());
  std::vector<std::size_t> counts(bin_centers.size(), 0);
  for (std::size_t i = 0; i < sample.n(); ++i) {
    bool covered = false;
    for (std::size_t b = 0; b < bin_centers.size(); ++b) {
      if (std::abs(sample.distances[i] - bin_centers[b]) <= half_width_km) {
        sums[b].add(sample.outcomes[i]);
        ++counts[b];
        covered = true;
      }
    }
    if (!covered) ++report.n_uncovered;
  }

  CompensatedSum mae_p_sum, mae_np_sum, mae_p_wsum, mae_np_wsum;
  std::size_t nonempty = 0, weighted_n = 0;
  for (std::size_t b = 0; b < bin_centers.size(); ++b) {
    ComparisonBin& bin = report.bins[b];
    bin.center_km = bin_centers[b];
    bin.half_width_km = half_width_km;
    bin.n_in_bin = counts[b];
    if (counts[b] == 0) continue;
    const double actual = sums[b].value() / static_cast<double>(counts[b]);
    bin.actual_mean = actual;
    bin.pred_parametric = fit.predict(bin_centers[b]);
    bin.pred_nonparametric = curve.value_at(bin_centers[b]);
    if (actual == 0.0) continue;  // percentage errors undefined, metrics stay null
    const double mae_p = std::abs(*bin.pred_parametric - actual) / std::abs(actual) * 100.0;
    const double mae_np = std::abs(*bin.pred_nonparametric - actual) / std::abs(actual) * 100.0;
    bin.mae_parametric_pct = mae_p;
    bin.mae_nonparametric_pct = mae_np;
    bin.improvement_pp = mae_p - mae_np;
    mae_p_sum.add(mae_p);
    mae_np_sum.add(mae_np);
    mae_p_wsum.add(mae_p * static_cast<double>(counts[b]));
    mae_np_wsum.add(mae_np * static_cast<double>(counts[b]));
    weighted_n += counts[b];
    ++nonempty;
  }
  if (nonempty == 0) throw DegenerateInputError("every comparison bin is empty");
  report.overall_mae_parametric = mae_p_sum.value() / static_cast<double>(nonempty);
  report.overall_mae_nonparametric = mae_np_sum.value() / static_cast<double>(nonempty);
  report.overall_improvement_pp =
      report.overall_mae_parametric - report.overall_mae_nonparametric;
  report.overall_mae_parametric_weighted = mae_p_wsum.value() / static_cast<double>(weighted_n);
  report.overall_mae_nonparametric_weighted =
      mae_np_wsum.value() / static_cast<double>(weighted_n);
  return report;
}

inline const std::vector<double>& default_bin_centers() {
  static const std::vector<double> centers{10.0, 25.0, 50.0, 75.0, 100.0};
  return centers;
}

struct PeriodSummaryRow {
  std::string period;
  std::size_t n = 0;
  double mean_outcome = 0.0;
  std::optional<double> pct_change_from_previous;  // chained, null for the first period
};

/// Per-period means with chained percentage changes; periods in ascending
/// label order. A zero prior mean makes the change undefined (null).
inline std::vector<PeriodSummaryRow> period_summary(
    const std::vector<std::pair<std::string, DistancedSample>>& samples_by_period) {
  if (samples_by_period.empty()) throw InvalidConfigError("period_summary needs >= 1 period");
  std::vector<PeriodSummaryRow> rows;
  rows.reserve(samples_by_period.size());
  for (const auto& [label, sample] : samples_by_period) {
    sample.validate();
    rows.push_back({label, sample.n(), mean(sample.outcomes), std::nullopt});
  }
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.period < b.period; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double prev = rows[i - 1].mean_outcome;
    if (prev != 0.0)
      rows[i].pct_change_from_previous = (rows[i].mean_outcome - prev) / prev * 100.0;
  }
  return rows;
}

}  // namespace decayscope
