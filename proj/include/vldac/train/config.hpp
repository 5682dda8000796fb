#pragma once

#include <cstdint>
#include <istream>
#include <string>

#include "vldac/envs/env.hpp"
#include "vldac/policy/policy.hpp"

namespace vldac::train {

enum class Algo {
  vldac,   // token-level clipped updates + step-level critic + KL/warm-up/stop-grad kit
  rl4vlm,  // single step-level ratio over a lambda-weighted thought/action logprob
  loop,    // leave-one-out advantages over K replays of each start state, no critic
  td,      // one-step TD critic (replay + soft target) driving token-level updates
};

const char* algo_name(Algo a);
Algo algo_from_name(const std::string& name);

struct TrainConfig {
  Algo algo = Algo::vldac;
  EnvSpec env;
  std::uint64_t seed = 1;
  std::string run_name;  // empty -> "<algo>_<env>_s<seed>"
  std::string out_root;  // empty -> $VLDAC_OUT_ROOT, else ./runs

  // budget / rollout shape
  std::int64_t total_env_steps = 51200;
  int segment_len = 256;  // env steps gathered per update (all slots combined)
  int num_envs = 8;

  // optimization
  double lr_start = 5e-5;
  double lr_end = 1e-7;
  int ppo_epochs = 2;
  int grad_accum = 128;  // sequences accumulated per optimizer step
  int minibatch = 1;     // sequences per backward micro-batch
  double max_grad_norm = 1.0;

  // objective
  double clip_eps = 0.2;
  double alpha = 0.15;  // value loss coefficient
  double beta = 0.05;   // KL penalty coefficient (0 disables)
  int warmup_updates = 2;  // critic-only updates before the policy moves
  bool stop_grad_value = true;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  bool normalize_adv = true;

  // algorithm-specific knobs
  double rl4vlm_lambda = 1.0;  // weight on the thought span's logprob
  int loop_k = 4;              // replays per start state
  int replay_capacity = 10000;
  double polyak_tau = 0.05;
  bool td_on_policy = false;  // train the critic on the fresh segment only
  int td_value_iters = 4;     // critic optimizer steps per update
  int td_value_batch = 128;   // transitions per critic step

  // evaluation / artifacts
  int eval_episodes = 50;
  int eval_every = 10;       // updates between greedy evals (always evals at the end)
  int checkpoint_every = 50; // updates between checkpoint rewrites
  bool dump_eval_trajectories = false;

  // Format pretraining: before any RL update the policy head is fit by
  // supervised cross-entropy to grammar-valid emissions with uniformly random
  // commands (rejection-sampled through the real parser, no expert actions).
  // The desk-scale stand-in for starting from a pretrained model that already
  // writes well-formed actions; 0 steps disables it.
  int format_pretrain_steps = 300;
  double format_pretrain_lr = 5e-3;
  int format_pretrain_batch = 32;

  policy::PolicyConfig policy;

  // Baseline defaults per algorithm: rl4vlm/loop/td run without the KL
  // penalty and warm-up, loop also drops the critic weight.
  static TrainConfig defaults_for(Algo a);

  void resolve();         // fill run_name + env defaults
  void validate() const;  // throws ConfigError
  std::int64_t total_updates() const;
  int steps_per_env() const { return segment_len / num_envs; }

  bool operator==(const TrainConfig&) const = default;
};

// Flat key=value config text with decorative [section] headers and #/; line
// comments. Unknown keys raise ConfigError with a nearest-key suggestion.
// Overrides replace file values before algorithm defaults are applied, so
// overriding "algo" behaves exactly like editing the file.
TrainConfig parse_config(std::istream& in);
TrainConfig parse_config(std::istream& in,
                         const std::vector<std::pair<std::string, std::string>>& overrides);
TrainConfig parse_config_file(const std::string& path);
TrainConfig parse_config_file(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides);

// Canonical dump: fixed key order, round-trips through parse_config.
std::string dump_config(const TrainConfig& cfg);

// FNV-1a over the canonical dump; stored in checkpoints to refuse resuming
// under a different configuration.
std::uint64_t config_fingerprint(const TrainConfig& cfg);

// Smallest edit distance helper used for the unknown-key suggestions.
int edit_distance(const std::string& a, const std::string& b);

}  // namespace vldac::train
