#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vldac/diff/tensor.hpp"
#include "vldac/envs/action.hpp"
#include "vldac/envs/observation.hpp"
#include "vldac/envs/vocab.hpp"
#include "vldac/rng.hpp"
#include "vldac/train/optim.hpp"

namespace vldac::policy {

struct PolicyConfig {
  int feature_dim = 128;
  int backbone_hidden = 64;
  int ctx_embed = 16;
  int tok_embed = 32;
  int head_hidden = 64;
  int value_hidden = 64;
  int max_tokens = 12;         // generated tokens per emission, BOS excluded
  bool stop_grad_value = true; // value head reads stop_grad(features)

  void validate() const;  // throws SpecError

  bool operator==(const PolicyConfig&) const = default;
};

// Teacher-forced scoring result. Everything lives on one graph sharing a
// single state encoding, so policy/KL/value losses built from it backprop
// through the backbone once.
struct ScoredSequence {
  std::vector<diff::Tensor> logprobs;   // one {1} scalar per generated position
  std::vector<diff::Tensor> dist_rows;  // one [1,V] row per generated position
  diff::Tensor value;                   // {1}
  int vocab_size = 0;

  int positions() const { return static_cast<int>(logprobs.size()); }
  diff::Tensor total_logprob() const;                    // sum over all positions
  diff::Tensor span_logprob(std::pair<int, int> span) const;  // generated-index half-open span
  std::vector<double> logprob_values() const;
  std::vector<std::vector<double>> dist_values() const;
};

// Small recurrent token policy over grid observations:
//   features = tanh(flat_obs @ W + ctx_mean @ W' + b)   (one-hot frames, mean
//   context embedding), token head = Elman recurrence over token embeddings
//   started from the features, value head = MLP on (optionally stop-gradient)
//   features. The output layers of both heads start at zero, so the initial
//   policy is uniform and the initial value exactly 0.
class TokenPolicy {
 public:
  TokenPolicy(const Vocabulary& vocab, const ObsDims& dims, const PolicyConfig& cfg,
              std::uint64_t init_seed);

  const Vocabulary& vocab() const { return vocab_; }
  const PolicyConfig& config() const { return cfg_; }
  const ObsDims& obs_dims() const { return dims_; }

  // [1, feature_dim] state encoding.
  diff::Tensor encode_state(const Observation& obs) const;

  // Next-token logits [1, V] after consuming prefix (prefix[0] must be BOS).
  // A SEP anywhere in the prefix masks the SEP logit to -1e9.
  diff::Tensor token_step(const diff::Tensor& features, std::span<const int> prefix) const;

  // Autoregressive sampling (or greedy argmax). Deterministic given the rng
  // state; logprobs stored on the emission match scoring bit-for-bit.
  ActionEmission sample_action(const Observation& obs, Rng& rng, bool greedy = false) const;

  // Teacher-forced scoring of a full emission's tokens (tokens[0] == BOS).
  // Throws SequenceError/VocabError for malformed sequences.
  ScoredSequence score_sequence(const Observation& obs, std::span<const int> tokens) const;

  // Value-only paths.
  diff::Tensor value(const Observation& obs) const;
  double value_detached(const Observation& obs) const;

  // Deep copy; later updates to either policy leave the other untouched.
  TokenPolicy snapshot() const;

  // Stable-named parameter groups: "pi.*" drives action distributions,
  // "v.*" the value head.
  train::NamedParams policy_params();
  train::NamedParams value_params();
  train::NamedParams all_params();

  void save_params(std::ostream& os) const;
  void load_params(std::istream& is);

 private:
  TokenPolicy() = default;
  diff::Tensor embed_row(const diff::Tensor& table, int id) const;
  diff::Tensor step_hidden(const diff::Tensor& h, int token_id) const;
  diff::Tensor logits_from_hidden(const diff::Tensor& h, bool sep_seen) const;
  void check_tokens(std::span<const int> tokens) const;

  Vocabulary vocab_;
  ObsDims dims_;
  PolicyConfig cfg_;

  // backbone + token head (policy group)
  diff::Tensor W_obs_, b_obs_;   // [flat, bh], [1, bh]
  diff::Tensor E_ctx_;           // [V, ce]
  diff::Tensor W_fu_, W_fc_, b_f_;  // [bh, D], [ce, D], [1, D]
  diff::Tensor E_tok_;           // [V, te]
  diff::Tensor W_h0_, b_h0_;     // [D, hh], [1, hh]
  diff::Tensor W_x_, U_h_, b_h_; // [te, hh], [hh, hh], [1, hh]
  diff::Tensor W_o_, b_o_;       // [hh, V], [1, V]  (zero-init)
  // value head (value group)
  diff::Tensor W_v1_, b_v1_;     // [D, vh], [1, vh]
  diff::Tensor W_v2_, b_v2_;     // [vh, 1], [1, 1]  (zero-init)
};

}  // namespace vldac::policy
