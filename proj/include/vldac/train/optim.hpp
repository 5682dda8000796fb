#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "vldac/diff/tensor.hpp"

namespace vldac::train {

using NamedParams = std::vector<std::pair<std::string, diff::Tensor>>;

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with per-parameter moments and step counters, keyed by parameter name.
// Per-parameter counters matter here: the policy head can stay frozen through
// value warm-up, and its bias correction must start when it starts moving.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // One update using the gradients accumulated on params, each scaled by
  // grad_scale (1/accumulation-count), with global-norm clipping across the
  // whole param group. Returns the pre-clip global grad norm. Parameters whose
  // grad was never touched count as zero-gradient and still tick their moments.
  // Throws NumericsError on non-finite gradients.
  double step(NamedParams& params, double lr, double grad_scale, double max_grad_norm);

  static void zero_grad(NamedParams& params);

  void save(std::ostream& os) const;
  void load(std::istream& is);

  bool operator==(const Adam& other) const;

 private:
  struct Slot {
    std::vector<double> m, v;
    std::int64_t t = 0;
  };
  AdamConfig cfg_;
  std::map<std::string, Slot> slots_;
};

// target <- tau * source + (1 - tau) * target, matched by position; names must
// agree pairwise.
void polyak_update(NamedParams& target, const NamedParams& source, double tau);

}  // namespace vldac::train
