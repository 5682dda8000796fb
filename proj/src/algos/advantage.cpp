#include "vldac/algos/advantage.hpp"

#include <cmath>
#include <numbers>

#include "vldac/errors.hpp"

namespace vldac::algos {

AdvantageResult gae_advantages(std::span<const double> rewards,
                               std::span<const double> values,
                               std::span<const std::uint8_t> dones,
                               double bootstrap_value,
                               const GaeConfig& cfg) {
  const size_t n = rewards.size();
  if (values.size() != n || dones.size() != n)
    throw ShapeError("gae: rewards/values/dones lengths differ");
  if (!std::isfinite(bootstrap_value)) throw NumericsError("gae: non-finite bootstrap value");
  for (size_t t = 0; t < n; ++t)
    if (!std::isfinite(rewards[t]) || !std::isfinite(values[t]))
      throw NumericsError("gae: non-finite reward or value at t=" + std::to_string(t));

  AdvantageResult out;
  out.advantages.resize(n);
  out.value_targets.resize(n);
  double next_adv = 0.0;
  double next_value = bootstrap_value;
  for (size_t i = n; i-- > 0;) {
    const double not_done = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + cfg.gamma * next_value * not_done - values[i];
    next_adv = delta + cfg.gamma * cfg.lambda * not_done * next_adv;
    out.advantages[i] = next_adv;
    out.value_targets[i] = next_adv + values[i];
    next_value = values[i];
  }
  return out;
}

void normalize_advantages(std::vector<double>& adv, double eps) {
  if (adv.empty()) return;
  double mean = 0;
  for (double a : adv) mean += a;
  mean /= static_cast<double>(adv.size());
  double var = 0;
  for (double a : adv) var += (a - mean) * (a - mean);
  var /= static_cast<double>(adv.size());
  const double denom = std::sqrt(var) + eps;
  for (double& a : adv) a = (a - mean) / denom;
}

std::vector<double> leave_one_out_advantages(std::span<const double> returns) {
  const size_t k = returns.size();
  if (k < 2) throw Error("leave_one_out_advantages: need at least 2 rollouts per group");
  double mean = 0;
  for (double r : returns) {
    if (!std::isfinite(r)) throw NumericsError("leave_one_out_advantages: non-finite return");
    mean += r;
  }
  mean /= static_cast<double>(k);
  const double scalefac = static_cast<double>(k) / static_cast<double>(k - 1);
  std::vector<double> adv(k);
  for (size_t i = 0; i < k; ++i) adv[i] = scalefac * (returns[i] - mean);
  return adv;
}

double td_target(double reward, bool done, double next_value, double gamma) {
  return reward + gamma * (done ? 0.0 : 1.0) * next_value;
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr_start, double lr_end) {
  if (total_steps <= 0) return lr_end;
  if (step <= 0) return lr_start;
  if (step >= total_steps) return lr_end;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_end + (lr_start - lr_end) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace vldac::algos
