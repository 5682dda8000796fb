#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vldac::analysis {

// One metric extracted from a run's metrics.jsonl: lines that carry the key
// with a non-null value, in file order, paired with their env_steps.
struct MetricSeries {
  std::vector<std::int64_t> steps;
  std::vector<double> values;
};

MetricSeries read_metric_series(const std::string& metrics_path, const std::string& key);

// Trailing moving average: out[i] = mean(v[max(0,i-w+1)..i]). window <= 1
// returns the input unchanged.
std::vector<double> moving_average(std::span<const double> v, int window);

struct CurveSummary {
  double mean = 0.0;
  double std_dev = 0.0;  // population
  double final_value = 0.0;
  double max_value = 0.0;
  int points = 0;
};

CurveSummary summarize_curve(std::span<const double> values);

struct GroupComparison {
  int n_a = 0, n_b = 0;
  double mean_a = 0.0, mean_b = 0.0;
  double std_a = 0.0, std_b = 0.0;  // population
  double diff = 0.0;                // mean_a - mean_b
  double welch_t = 0.0;             // sample-variance Welch statistic
  bool t_valid = false;             // false when either group is degenerate
};

GroupComparison compare_groups(std::span<const double> a, std::span<const double> b);

// A seed group's metric curves collapsed to per-eval-point mean and population
// std. Smoothing (trailing window) is applied to each run before aggregation.
// All runs must carry the same number of points; a mismatch names the
// offending run in an AlignmentError. The steps column is the per-point mean
// of the runs' env_steps (identical-config seeds share the grid exactly;
// episode-count-driven collection only jitters it).
struct GroupCurve {
  std::vector<std::int64_t> steps;
  std::vector<double> mean;
  std::vector<double> std_dev;  // population
  double final_mean = 0.0;
  double final_std = 0.0;
  int runs = 0;
  int points() const { return static_cast<int>(mean.size()); }
};

GroupCurve aggregate_group(const std::vector<MetricSeries>& runs,
                           const std::vector<std::string>& names, int window);

// Directional verdict between two seed groups: final-point mean difference,
// population-pooled std of the final values, a flag for whether A's mean curve
// is >= B's at every eval point in the last quartile (final ceil(points/4)
// points), and the Welch statistic on final values. Groups must have matching
// point counts.
struct CurveComparison {
  GroupCurve a, b;
  double final_diff = 0.0;  // a.final_mean - b.final_mean
  double pooled_std = 0.0;  // population-pooled over both groups' final values
  bool a_ge_b_last_quartile = false;
  int quartile_points = 0;  // how many trailing points the flag covers
  double welch_t = 0.0;
  bool t_valid = false;
};

CurveComparison compare_curves(const std::vector<MetricSeries>& group_a,
                               const std::vector<std::string>& names_a,
                               const std::vector<MetricSeries>& group_b,
                               const std::vector<std::string>& names_b, int window);

}  // namespace vldac::analysis
