#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace vldac::algos {

struct GaeConfig {
  double gamma = 0.99;
  double lambda = 0.95;
};

struct AdvantageResult {
  std::vector<double> advantages;
  std::vector<double> value_targets;  // advantage + value, the critic regression target
};

// Generalized advantage estimation over one rollout segment (possibly spanning
// several episodes; dones[t] cuts the recursion). bootstrap_value is V(s_T)
// used only when the segment ends mid-episode (dones.back() == false).
// Throws NumericsError on non-finite inputs, ShapeError on length mismatch.
AdvantageResult gae_advantages(std::span<const double> rewards,
                               std::span<const double> values,
                               std::span<const std::uint8_t> dones,
                               double bootstrap_value,
                               const GaeConfig& cfg);

// In-place standardization to zero mean / unit (population) std. A vector with
// no spread maps to all zeros rather than NaN.
void normalize_advantages(std::vector<double>& adv, double eps = 1e-8);

// Leave-one-out advantages for K rollouts of the same initial state:
// A_i = K/(K-1) * (R_i - mean(R)), identically R_i - mean of the other K-1.
// Throws Error for K < 2.
std::vector<double> leave_one_out_advantages(std::span<const double> returns);

// One-step TD target r + gamma * (1 - done) * next_value.
double td_target(double reward, bool done, double next_value, double gamma);

// Cosine decay from lr_start (step 0) to lr_end (step total_steps).
double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr_start, double lr_end);

}  // namespace vldac::algos
