#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vldac/train/config.hpp"
#include "vldac/train/optim.hpp"
#include "vldac/train/rollout.hpp"

namespace vldac::train {

struct UpdateStats {
  std::int64_t update = 0;
  std::int64_t env_steps = 0;
  std::int64_t opt_steps = 0;
  double loss_policy = 0.0;
  double loss_kl = 0.0;
  double loss_value = 0.0;
  double loss_total = 0.0;
  double grad_norm = 0.0;  // mean pre-clip global norm over this update's optimizer steps
  double lr = 0.0;         // last learning rate applied
  double parse_rate = 0.0;
  int train_episodes = 0;  // episodes finished inside the segment
  double train_sr = 0.0;
  double train_return = 0.0;
  bool has_eval = false;
  double eval_sr = 0.0;
  double eval_return = 0.0;
};

// Drives one run end to end: collect a segment, turn it into per-step training
// items, run clipped-surrogate epochs with gradient accumulation, and
// periodically evaluate greedily and checkpoint. The whole run is a pure
// function of its config, so metrics files are byte-reproducible.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  // Rebuilds a trainer frozen mid-run. Truncates the run's metrics file back
  // to the checkpointed line count so a killed run resumes byte-identically.
  static std::unique_ptr<Trainer> resume(const std::string& checkpoint_path);

  bool finished() const { return env_steps_ >= cfg_.total_env_steps; }

  // One update: returns its stats without touching the metrics file.
  UpdateStats run_update();

  // Full loop with metrics/eval/checkpoint side effects under out_dir().
  void run(const std::function<void(const UpdateStats&)>& on_update = nullptr);

  const TrainConfig& config() const { return cfg_; }
  policy::TokenPolicy& policy() { return *policy_; }
  const policy::TokenPolicy& policy() const { return *policy_; }
  std::int64_t update_index() const { return update_; }
  std::int64_t env_steps() const { return env_steps_; }
  std::int64_t opt_steps() const { return opt_steps_; }
  std::int64_t total_opt_steps() const { return total_opt_steps_; }
  std::int64_t metrics_lines() const { return metrics_lines_; }

  std::string out_dir() const;
  std::string metrics_path() const { return out_dir() + "/metrics.jsonl"; }
  std::string checkpoint_path() const { return out_dir() + "/checkpoint.bin"; }
  std::string config_path() const { return out_dir() + "/config.ini"; }
  std::string trajectories_path() const { return out_dir() + "/eval_trajectories.jsonl"; }

  EvalResult evaluate(std::ostream* traj_out = nullptr) const;
  void save_checkpoint() const;
  void append_metrics(const UpdateStats& s);  // one JSONL line, bumps metrics_lines_

  static std::string metrics_line(const UpdateStats& s);

 private:
  struct Item {
    const StepRecord* rec = nullptr;
    double advantage = 0.0;
    double value_target = 0.0;
  };
  struct LossParts {
    diff::Tensor loss;
    double policy_part = 0.0, kl_part = 0.0, value_part = 0.0;
  };
  struct Transition {
    Observation obs, next_obs;
    double reward = 0.0;
    std::uint8_t done = 0;
  };

  void init_members();
  Segment collect_segment();
  std::vector<Item> build_items(const Segment& seg) const;
  LossParts item_loss(const Item& item, bool value_only) const;
  void run_epochs(const std::vector<Item>& items, bool value_only, UpdateStats& stats);
  void critic_phase(const Segment& seg, UpdateStats& stats);
  void push_replay(const Segment& seg);
  void ensure_out_dir() const;
  void truncate_metrics_to(std::int64_t lines) const;

  TrainConfig cfg_;
  std::unique_ptr<policy::TokenPolicy> policy_;
  std::unique_ptr<policy::TokenPolicy> target_;  // td soft-target network
  Adam adam_;
  std::unique_ptr<VecRollout> vec_;
  std::unique_ptr<LoopRollout> loop_;
  Rng update_rng_;  // epoch shuffles + replay sampling
  std::vector<Transition> replay_;
  std::size_t replay_pos_ = 0;

  std::int64_t update_ = 0;
  std::int64_t env_steps_ = 0;
  std::int64_t opt_steps_ = 0;
  std::int64_t total_opt_steps_ = 0;
  std::int64_t metrics_lines_ = 0;
};

}  // namespace vldac::train
