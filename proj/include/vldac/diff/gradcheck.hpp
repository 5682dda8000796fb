#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vldac/diff/tensor.hpp"

namespace vldac::diff {

struct GradCheckEntry {
  std::string name;
  int index = 0;          // flat index within the parameter
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_err = 0.0;
  double tol = 0.0;
  std::vector<GradCheckEntry> worst;  // worst entry per parameter
};

// Central-difference check of the analytic gradients of f() w.r.t. params.
// f must rebuild its graph on every call (it is re-evaluated 2x per entry).
// rel_err = |a - n| / max(|a|, |n|, 1e-3); the floor keeps finite-difference
// noise on near-zero gradients from registering as spurious relative error.
// Throws NumericsError if f() is non-finite at the base point.
GradCheckReport finite_diff_check(const std::function<Tensor()>& f,
                                  const std::vector<std::pair<std::string, Tensor>>& params,
                                  double h = 1e-5, double tol = 1e-4);

}  // namespace vldac::diff
