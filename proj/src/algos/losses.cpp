#include "vldac/algos/losses.hpp"

#include <cmath>

#include "vldac/errors.hpp"

namespace vldac::algos {

using diff::Tensor;

Tensor token_clip_step_loss(const Tensor& gathered_probs,
                            std::span<const double> old_probs,
                            double advantage,
                            double clip_eps) {
  const int n = gathered_probs.numel();
  if (static_cast<size_t>(n) != old_probs.size())
    throw ShapeError("token_clip_step_loss: probs/old_probs length mismatch");
  if (!std::isfinite(advantage)) throw NumericsError("token_clip_step_loss: non-finite advantage");
  std::vector<double> inv_old(old_probs.size());
  for (size_t i = 0; i < old_probs.size(); ++i) {
    if (!(old_probs[i] > 0.0)) throw NumericsError("token_clip_step_loss: old prob must be > 0");
    inv_old[i] = 1.0 / old_probs[i];
  }
  auto ratios = diff::mul(gathered_probs, Tensor::from({n}, std::move(inv_old)));
  auto surr_raw = diff::scale(ratios, advantage);
  auto surr_clip = diff::scale(diff::clip(ratios, 1.0 - clip_eps, 1.0 + clip_eps), advantage);
  return diff::neg(diff::mean(diff::minimum(surr_raw, surr_clip)));
}

Tensor token_clip_step_loss(const std::vector<Tensor>& gathered_probs,
                            std::span<const double> old_probs,
                            double advantage,
                            double clip_eps) {
  const size_t n = gathered_probs.size();
  if (n == 0 || n != old_probs.size())
    throw ShapeError("token_clip_step_loss: probs/old_probs length mismatch");
  if (!std::isfinite(advantage)) throw NumericsError("token_clip_step_loss: non-finite advantage");
  Tensor acc;
  for (size_t i = 0; i < n; ++i) {
    if (gathered_probs[i].numel() != 1)
      throw ShapeError("token_clip_step_loss: gathered prob " + std::to_string(i) +
                       " must be a scalar");
    if (!(old_probs[i] > 0.0)) throw NumericsError("token_clip_step_loss: old prob must be > 0");
    auto ratio = diff::scale(gathered_probs[i], 1.0 / old_probs[i]);
    auto surr_raw = diff::scale(ratio, advantage);
    auto surr_clip = diff::scale(diff::clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps), advantage);
    auto term = diff::minimum(surr_raw, surr_clip);
    acc = i == 0 ? term : diff::add(acc, term);
  }
  return diff::scale(acc, -1.0 / static_cast<double>(n));
}

Tensor mixed_logprob(const Tensor& thought_logprob, const Tensor& action_logprob, double lambda) {
  return diff::add(diff::scale(thought_logprob, lambda), action_logprob);
}

Tensor step_clip_loss(const Tensor& new_mixed_logprob,
                      double old_mixed_logprob,
                      double advantage,
                      double clip_eps) {
  if (!std::isfinite(advantage) || !std::isfinite(old_mixed_logprob))
    throw NumericsError("step_clip_loss: non-finite inputs");
  auto ratio = diff::exp(diff::add_const(new_mixed_logprob, -old_mixed_logprob));
  auto surr_raw = diff::scale(ratio, advantage);
  auto surr_clip = diff::scale(diff::clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps), advantage);
  return diff::neg(diff::minimum(surr_raw, surr_clip));
}

Tensor kl_penalty(const std::vector<Tensor>& new_dist_rows,
                  const std::vector<std::vector<double>>& old_dist_rows,
                  KlDirection direction) {
  if (new_dist_rows.empty() || new_dist_rows.size() != old_dist_rows.size())
    throw ShapeError("kl_penalty: need matching, nonempty distribution rows");
  Tensor acc;
  for (size_t i = 0; i < new_dist_rows.size(); ++i) {
    const Tensor& pnew = new_dist_rows[i];
    const auto& pold = old_dist_rows[i];
    if (static_cast<size_t>(pnew.numel()) != pold.size())
      throw ShapeError("kl_penalty: row " + std::to_string(i) + " size mismatch");
    Tensor row_kl;
    if (direction == KlDirection::forward) {
      // sum p_old * (log p_old - log p_new); the entropy term is a constant
      double ent = 0.0;
      for (double p : pold)
        if (p > 0.0) ent += p * std::log(std::max(p, diff::kLogFloor));
      auto cross = diff::sum(diff::mul(diff::log(pnew), Tensor::from(pnew.shape(), pold)));
      row_kl = diff::add(diff::neg(cross), Tensor::scalar(ent));
    } else {
      std::vector<double> log_old(pold.size());
      for (size_t j = 0; j < pold.size(); ++j) log_old[j] = std::log(std::max(pold[j], diff::kLogFloor));
      auto diff_logs = diff::sub(diff::log(pnew), Tensor::from(pnew.shape(), std::move(log_old)));
      row_kl = diff::sum(diff::mul(pnew, diff_logs));
    }
    acc = acc.defined() ? diff::add(acc, row_kl) : row_kl;
  }
  return diff::scale(acc, 1.0 / static_cast<double>(new_dist_rows.size()));
}

Tensor value_step_loss(const Tensor& value, double target) {
  if (!std::isfinite(target)) throw NumericsError("value_step_loss: non-finite target");
  auto d = diff::add_const(value, -target);
  return diff::scale(diff::mul(d, d), 0.5);
}

Tensor total_loss(const Tensor& policy_loss,
                  const Tensor& kl_loss,
                  const Tensor& value_loss,
                  double kl_coef,
                  double value_coef) {
  return diff::add(policy_loss,
                   diff::add(diff::scale(kl_loss, kl_coef), diff::scale(value_loss, value_coef)));
}

}  // namespace vldac::algos
