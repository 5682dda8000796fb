#pragma once

#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <vector>

#include "vldac/envs/env.hpp"
#include "vldac/policy/policy.hpp"
#include "vldac/rng.hpp"

namespace vldac::train {

// One environment step as the updaters consume it: everything rollout-time is
// frozen into plain doubles so update-time graphs only carry live parameters.
struct StepRecord {
  Observation obs;
  Observation next_obs;  // next episode's first obs when done (ignored then)
  ActionEmission emission;
  std::vector<std::vector<double>> old_dists;  // [positions][V] rollout policy rows
  double old_value = 0.0;
  double reward = 0.0;
  bool done = false;
  bool success = false;
  bool parse_ok = true;
};

// A contiguous run of steps from one env slot (or one whole episode for the
// leave-one-out collector, which also carries the trajectory advantage).
struct EnvTrace {
  std::vector<StepRecord> steps;
  double bootstrap_value = 0.0;  // V(s_T) when the trace ends mid-episode
  double loop_advantage = 0.0;
};

struct Segment {
  std::vector<EnvTrace> traces;
  int episodes_done = 0;
  int episodes_succeeded = 0;
  double episode_return_sum = 0.0;  // over episodes finished in this segment

  std::int64_t env_steps() const;
  double parse_rate() const;
};

void write_observation(std::ostream& os, const Observation& obs);
Observation read_observation(std::istream& is);

// Fixed pool of environments stepped round-robin in slot order. Each slot owns
// a sampling rng stream and an episode-seed counter, so a run is a pure
// function of the master seed and checkpoints can freeze mid-stream.
class VecRollout {
 public:
  VecRollout(const EnvSpec& spec, int num_envs, std::uint64_t master_seed);

  Segment collect(const policy::TokenPolicy& pol, int steps_per_env);

  int num_envs() const { return static_cast<int>(slots_.size()); }
  const Observation& pending_obs(int slot) const { return slots_[static_cast<size_t>(slot)].pending; }

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  struct Slot {
    std::unique_ptr<Env> env;
    Rng rng;
    std::int64_t episode_index = 0;
    Observation pending;
    double episode_return = 0.0;
  };
  std::uint64_t master_seed_ = 0;
  std::vector<Slot> slots_;
};

// Episode-replay collector: every group resets the same episode seed loop_k
// times, producing whole-episode traces whose returns feed the leave-one-out
// baseline. Collects complete groups until min_steps env steps are gathered.
class LoopRollout {
 public:
  LoopRollout(const EnvSpec& spec, int loop_k, double gamma, std::uint64_t master_seed);

  Segment collect(const policy::TokenPolicy& pol, int min_steps);

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  std::unique_ptr<Env> env_;
  int loop_k_;
  double gamma_;
  std::uint64_t master_seed_ = 0;
  Rng rng_;
  std::int64_t task_index_ = 0;
};

struct EvalResult {
  int episodes = 0;
  int successes = 0;
  double return_sum = 0.0;

  double success_rate() const { return episodes ? static_cast<double>(successes) / episodes : 0.0; }
  double mean_return() const { return episodes ? return_sum / episodes : 0.0; }
};

// Deterministic greedy-argmax evaluation over episode seeds derived from
// eval_seed. When traj_out is non-null each episode is dumped as one JSON line
// with its emissions, rewards, and outcome.
EvalResult greedy_eval(const policy::TokenPolicy& pol, const EnvSpec& spec,
                       std::uint64_t eval_seed, int episodes, std::ostream* traj_out = nullptr);

}  // namespace vldac::train
