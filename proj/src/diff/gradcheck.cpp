#include "vldac/diff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace vldac::diff {

GradCheckReport finite_diff_check(const std::function<Tensor()>& f,
                                  const std::vector<std::pair<std::string, Tensor>>& params,
                                  double h, double tol) {
  GradCheckReport report;
  report.tol = tol;

  Tensor base = f();
  if (base.numel() != 1) throw RankError("finite_diff_check: f() must return a scalar");
  if (!std::isfinite(base.value())) throw NumericsError("finite_diff_check: non-finite base loss");

  for (auto& [name, p] : params) {
    const_cast<Tensor&>(p).zero_grad();
  }
  backward(base);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, p] : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    }
  }

  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi].second;
    auto vals = p.raw_data();
    GradCheckEntry worst;
    worst.name = params[pi].first;
    for (size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      double up, down;
      {
        NoGradGuard ng;  // re-evaluations need values only
        vals[i] = keep + h;
        up = f().value();
        vals[i] = keep - h;
        down = f().value();
        vals[i] = keep;
      }
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][i];
      const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-3});
      if (rel >= worst.rel_err) {
        worst.index = static_cast<int>(i);
        worst.analytic = a;
        worst.numeric = numeric;
        worst.rel_err = rel;
      }
      report.max_rel_err = std::max(report.max_rel_err, rel);
    }
    report.worst.push_back(std::move(worst));
  }
  report.passed = report.max_rel_err <= tol;
  return report;
}

}  // namespace vldac::diff
