#pragma once

#include <algorithm>

#include "vldac/envs/env.hpp"
#include "vldac/rng.hpp"
#include "vldac/utils/serialize.hpp"

// Shared scaffolding for the concrete environments: frame-stack history,
// reward assembly, horizon bookkeeping, and the common parts of save/load.

namespace vldac::envs {

class BaseEnv : public Env {
 protected:
  using Env::Env;

  std::vector<std::vector<std::uint8_t>> frames_;

  void start_frames(std::vector<std::uint8_t> grid) {
    frames_.assign(static_cast<size_t>(spec_.frame_stack), grid);
  }

  void push_frame(std::vector<std::uint8_t> grid) {
    frames_.erase(frames_.begin());
    frames_.push_back(std::move(grid));
  }

  Observation make_obs(std::vector<int> context) const {
    Observation obs;
    obs.dims = spec_.obs_dims();
    obs.cells.reserve(static_cast<size_t>(obs.dims.flat_size()));
    for (const auto& f : frames_) obs.cells.insert(obs.cells.end(), f.begin(), f.end());
    obs.context_tokens = std::move(context);
    obs.validate();
    return obs;
  }

  // Reward rule shared by all tasks: +1 on success, parse penalty for
  // ungrammatical emissions, a -1/horizon time cost under the shaped scheme,
  // everything clamped to [-1, 1].
  double assemble_reward(bool parsed, bool success) const {
    double r = 0.0;
    if (!parsed) r += kParseFailurePenalty;
    if (success) r += 1.0;
    else if (spec_.reward == RewardScheme::shaped) r += -1.0 / static_cast<double>(spec_.horizon);
    return std::clamp(r, -1.0, 1.0);
  }

  void guard_step() const {
    if (done_) throw EpisodeDoneError("step() on a finished episode; call reset() first");
  }

  void save_common(std::ostream& os) const {
    ser::write_u8(os, static_cast<std::uint8_t>(spec_.kind));
    ser::write_u64(os, episode_seed_);
    ser::write_u32(os, static_cast<std::uint32_t>(time_));
    ser::write_u8(os, done_ ? 1 : 0);
    ser::write_u64(os, frames_.size());
    for (const auto& f : frames_) ser::write_vec_u8(os, f);
  }

  void load_common(std::istream& is) {
    const auto kind = static_cast<EnvKind>(ser::read_u8(is));
    if (kind != spec_.kind) throw CheckpointError("env state kind does not match spec");
    episode_seed_ = ser::read_u64(is);
    time_ = static_cast<int>(ser::read_u32(is));
    done_ = ser::read_u8(is) != 0;
    frames_.resize(ser::read_u64(is));
    for (auto& f : frames_) f = ser::read_vec_u8(is);
  }
};

}  // namespace vldac::envs
