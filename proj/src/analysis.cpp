#include "vldac/analysis.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "vldac/errors.hpp"

namespace vldac::analysis {

MetricSeries read_metric_series(const std::string& metrics_path, const std::string& key) {
  std::ifstream in(metrics_path);
  if (!in) throw IoError("cannot open metrics file: " + metrics_path);
  MetricSeries series;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IoError(metrics_path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    if (!j.contains(key) || j[key].is_null()) continue;
    if (!j[key].is_number())
      throw IoError(metrics_path + ":" + std::to_string(lineno) + ": '" + key +
                    "' is not numeric");
    series.steps.push_back(j.value("env_steps", std::int64_t{0}));
    series.values.push_back(j[key].get<double>());
  }
  return series;
}

std::vector<double> moving_average(std::span<const double> v, int window) {
  std::vector<double> out(v.begin(), v.end());
  if (window <= 1) return out;
  double running = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    running += v[i];
    if (i >= static_cast<size_t>(window)) running -= v[i - static_cast<size_t>(window)];
    const size_t span = std::min(i + 1, static_cast<size_t>(window));
    out[i] = running / static_cast<double>(span);
  }
  return out;
}

CurveSummary summarize_curve(std::span<const double> values) {
  CurveSummary s;
  s.points = static_cast<int>(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  s.max_value = values[0];
  for (double v : values) {
    sum += v;
    s.max_value = std::max(s.max_value, v);
  }
  s.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std_dev = std::sqrt(ss / static_cast<double>(values.size()));
  s.final_value = values.back();
  return s;
}

GroupComparison compare_groups(std::span<const double> a, std::span<const double> b) {
  GroupComparison c;
  const auto sa = summarize_curve(a);
  const auto sb = summarize_curve(b);
  c.n_a = sa.points;
  c.n_b = sb.points;
  c.mean_a = sa.mean;
  c.mean_b = sb.mean;
  c.std_a = sa.std_dev;
  c.std_b = sb.std_dev;
  c.diff = sa.mean - sb.mean;
  if (c.n_a >= 2 && c.n_b >= 2) {
    // sample variances for the Welch statistic
    const double var_a = c.std_a * c.std_a * c.n_a / (c.n_a - 1);
    const double var_b = c.std_b * c.std_b * c.n_b / (c.n_b - 1);
    const double denom = std::sqrt(var_a / c.n_a + var_b / c.n_b);
    if (denom > 0) {
      c.welch_t = c.diff / denom;
      c.t_valid = true;
    }
  }
  return c;
}

GroupCurve aggregate_group(const std::vector<MetricSeries>& runs,
                           const std::vector<std::string>& names, int window) {
  if (runs.empty()) throw AlignmentError("empty run group");
  if (names.size() != runs.size()) throw AlignmentError("run/name count mismatch");
  GroupCurve g;
  g.runs = static_cast<int>(runs.size());
  const size_t points = runs[0].values.size();
  if (points == 0) throw AlignmentError("run '" + names[0] + "' has no metric values");
  for (size_t r = 1; r < runs.size(); ++r)
    if (runs[r].values.size() != points)
      throw AlignmentError("run '" + names[r] + "' has " +
                           std::to_string(runs[r].values.size()) +
                           " eval points, expected " + std::to_string(points) +
                           " (from '" + names[0] + "')");

  std::vector<std::vector<double>> smoothed;
  smoothed.reserve(runs.size());
  for (const auto& run : runs) smoothed.push_back(moving_average(run.values, window));

  g.steps.resize(points);
  g.mean.resize(points);
  g.std_dev.resize(points);
  for (size_t i = 0; i < points; ++i) {
    double step_sum = 0.0, sum = 0.0;
    for (size_t r = 0; r < runs.size(); ++r) {
      step_sum += static_cast<double>(runs[r].steps[i]);
      sum += smoothed[r][i];
    }
    const double n = static_cast<double>(runs.size());
    g.steps[i] = static_cast<std::int64_t>(std::llround(step_sum / n));
    g.mean[i] = sum / n;
    double ss = 0.0;
    for (size_t r = 0; r < runs.size(); ++r) {
      const double d = smoothed[r][i] - g.mean[i];
      ss += d * d;
    }
    g.std_dev[i] = std::sqrt(ss / n);
  }
  g.final_mean = g.mean.back();
  g.final_std = g.std_dev.back();
  return g;
}

CurveComparison compare_curves(const std::vector<MetricSeries>& group_a,
                               const std::vector<std::string>& names_a,
                               const std::vector<MetricSeries>& group_b,
                               const std::vector<std::string>& names_b, int window) {
  CurveComparison c;
  c.a = aggregate_group(group_a, names_a, window);
  c.b = aggregate_group(group_b, names_b, window);
  if (c.a.points() != c.b.points())
    throw AlignmentError("group eval grids differ: " + std::to_string(c.a.points()) + " vs " +
                         std::to_string(c.b.points()) + " points");
  c.final_diff = c.a.final_mean - c.b.final_mean;

  // population-pooled spread of the final values across both groups
  const double na = c.a.runs, nb = c.b.runs;
  const double var_a = c.a.final_std * c.a.final_std;
  const double var_b = c.b.final_std * c.b.final_std;
  c.pooled_std = std::sqrt((na * var_a + nb * var_b) / (na + nb));

  const int points = c.a.points();
  c.quartile_points = (points + 3) / 4;  // ceil(points/4), at least 1
  c.a_ge_b_last_quartile = true;
  for (int i = points - c.quartile_points; i < points; ++i)
    if (c.a.mean[static_cast<size_t>(i)] < c.b.mean[static_cast<size_t>(i)])
      c.a_ge_b_last_quartile = false;

  // Welch statistic over final values (needs per-run finals)
  std::vector<double> fa, fb;
  for (const auto& run : group_a) fa.push_back(moving_average(run.values, window).back());
  for (const auto& run : group_b) fb.push_back(moving_average(run.values, window).back());
  const auto gc = compare_groups(fa, fb);
  c.welch_t = gc.welch_t;
  c.t_valid = gc.t_valid;
  return c;
}

}  // namespace vldac::analysis
