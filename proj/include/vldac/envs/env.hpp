#pragma once

#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>

#include "vldac/envs/action.hpp"
#include "vldac/envs/observation.hpp"
#include "vldac/envs/vocab.hpp"

namespace vldac {

enum class RewardScheme { sparse_terminal, shaped };
enum class RoomsLayout { one_room, wall_gap };

const char* reward_scheme_name(RewardScheme s);
RewardScheme reward_scheme_from_name(const std::string& name);

struct EnvSpec {
  EnvKind kind = EnvKind::hallway_nav;
  RewardScheme reward = RewardScheme::sparse_terminal;
  RoomsLayout layout = RoomsLayout::one_room;  // rooms_nav only
  int horizon = 0;      // 0 = kind default
  int frame_stack = 0;  // 0 = kind default

  // Fills defaulted fields and checks ranges; throws SpecError.
  static EnvSpec make(EnvKind kind);
  void resolve_defaults();
  void validate() const;
  ObsDims obs_dims() const;
  int context_len() const;

  bool operator==(const EnvSpec&) const = default;
};

struct StepOutcome {
  Observation obs;  // next observation
  double reward = 0.0;
  bool done = false;
  bool success = false;
  bool parse_ok = true;
};

inline constexpr double kParseFailurePenalty = -0.01;

// Token-action environment. All randomness is drawn at reset() from the
// episode seed; transitions are deterministic. step() after done throws
// EpisodeDoneError until the next reset().
class Env {
 public:
  virtual ~Env() = default;

  const EnvSpec& spec() const { return spec_; }
  const Vocabulary& vocab() const { return vocab_; }
  bool done() const { return done_; }
  int time() const { return time_; }
  std::uint64_t episode_seed() const { return episode_seed_; }

  virtual Observation reset(std::uint64_t episode_seed) = 0;
  virtual StepOutcome step(const ParsedAction& action) = 0;

  // Action-span tokens (no BOS/SEP/EOS) the built-in expert would emit from
  // the current state; used by oracles and smoke rollouts.
  virtual std::vector<int> expert_action_tokens() const = 0;

  virtual void save(std::ostream& os) const = 0;
  virtual void load(std::istream& is) = 0;

 protected:
  Env(EnvSpec spec, Vocabulary vocab) : spec_(std::move(spec)), vocab_(std::move(vocab)) {}

  EnvSpec spec_;
  Vocabulary vocab_;
  int time_ = 0;
  bool done_ = true;  // must reset() before first step()
  std::uint64_t episode_seed_ = 0;
};

std::unique_ptr<Env> make_env(const EnvSpec& spec);

// Runs the built-in expert from reset(episode_seed) and returns the number of
// steps it needed to succeed. Throws SpecError if the expert cannot solve the
// episode within the horizon (i.e. the instance is broken).
int success_oracle(const EnvSpec& spec, std::uint64_t episode_seed);

// Wraps action-span tokens into a full emission ([BOS] <sep> span [EOS]) with
// uniform placeholder logprobs; handy for oracles and tests.
ActionEmission wrap_action_tokens(const std::vector<int>& span_tokens);

}  // namespace vldac
