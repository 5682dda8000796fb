#pragma once

#include <span>
#include <vector>

#include "vldac/diff/tensor.hpp"

// Graph-building loss constructors. Advantages and rollout-time quantities
// enter as plain doubles (constants), so no stop-gradient bookkeeping is
// needed on that side; gradients flow only through the "new" policy tensors.

namespace vldac::algos {

// Token-level clipped surrogate for one environment step:
//   -(1/n) * sum_i min(r_i * A, clip(r_i, 1-eps, 1+eps) * A)
// with r_i = gathered_probs[i] / old_probs[i] built multiplicatively.
// gathered_probs: rank-1 [n] graph tensor of the taken tokens' probabilities.
diff::Tensor token_clip_step_loss(const diff::Tensor& gathered_probs,
                                  std::span<const double> old_probs,
                                  double advantage,
                                  double clip_eps);

// Same surrogate built from per-position {1} probability scalars, which is the
// shape a teacher-forced scoring pass yields; identical value and gradients.
diff::Tensor token_clip_step_loss(const std::vector<diff::Tensor>& gathered_probs,
                                  std::span<const double> old_probs,
                                  double advantage,
                                  double clip_eps);

// lambda * thought_logprob + action_logprob, each a {1} graph scalar.
diff::Tensor mixed_logprob(const diff::Tensor& thought_logprob,
                           const diff::Tensor& action_logprob,
                           double lambda);

// Step-level clipped surrogate with a single sequence ratio
//   r = exp(new_mixed_logprob - old_mixed_logprob).
diff::Tensor step_clip_loss(const diff::Tensor& new_mixed_logprob,
                            double old_mixed_logprob,
                            double advantage,
                            double clip_eps);

enum class KlDirection {
  forward,  // KL(old || new): mass-covering penalty, the default
  reverse,  // KL(new || old)
};

// Mean over positions of the token-distribution KL between the frozen rollout
// policy (plain doubles) and the live policy (graph rows, each [1,V]).
diff::Tensor kl_penalty(const std::vector<diff::Tensor>& new_dist_rows,
                        const std::vector<std::vector<double>>& old_dist_rows,
                        KlDirection direction = KlDirection::forward);

// 0.5 * (v - target)^2 for a {1} value prediction.
diff::Tensor value_step_loss(const diff::Tensor& value, double target);

// L = policy + kl_coef * kl + value_coef * value.
diff::Tensor total_loss(const diff::Tensor& policy_loss,
                        const diff::Tensor& kl_loss,
                        const diff::Tensor& value_loss,
                        double kl_coef,
                        double value_coef);

}  // namespace vldac::algos
