#include "vldac/envs/env.hpp"

namespace vldac {

namespace envs {
std::unique_ptr<Env> make_nav_env(const EnvSpec& spec);
std::unique_ptr<Env> make_card_env(const EnvSpec& spec);
std::unique_ptr<Env> make_shop_env(const EnvSpec& spec);
}  // namespace envs

const char* reward_scheme_name(RewardScheme s) {
  return s == RewardScheme::sparse_terminal ? "sparse_terminal" : "shaped";
}

RewardScheme reward_scheme_from_name(const std::string& name) {
  if (name == "sparse_terminal") return RewardScheme::sparse_terminal;
  if (name == "shaped") return RewardScheme::shaped;
  throw SpecError("unknown reward scheme '" + name + "'");
}

EnvSpec EnvSpec::make(EnvKind kind) {
  EnvSpec s;
  s.kind = kind;
  s.resolve_defaults();
  return s;
}

void EnvSpec::resolve_defaults() {
  if (horizon == 0) {
    switch (kind) {
      case EnvKind::hallway_nav: horizon = 20; break;
      case EnvKind::rooms_nav: horizon = 40; break;
      case EnvKind::card_points: horizon = 6; break;
      case EnvKind::tiny_shop: horizon = 8; break;
    }
  }
  if (frame_stack == 0) frame_stack = (kind == EnvKind::card_points) ? 1 : 4;
  validate();
}

void EnvSpec::validate() const {
  if (horizon < 2 || horizon > 1000)
    throw SpecError("env horizon " + std::to_string(horizon) + " out of range [2,1000]");
  if (frame_stack < 1 || frame_stack > 8)
    throw SpecError("frame_stack " + std::to_string(frame_stack) + " out of range [1,8]");
}

ObsDims EnvSpec::obs_dims() const {
  ObsDims d;
  d.frame_stack = frame_stack;
  d.context_len = context_len();
  switch (kind) {
    case EnvKind::hallway_nav: d.channels = 7; d.height = 1; d.width = 8; break;
    case EnvKind::rooms_nav: d.channels = 7; d.height = 7; d.width = 7; break;
    case EnvKind::card_points: d.channels = 12; d.height = 2; d.width = 3; break;
    case EnvKind::tiny_shop: d.channels = 5; d.height = 6; d.width = 4; break;
  }
  return d;
}

int EnvSpec::context_len() const {
  switch (kind) {
    case EnvKind::hallway_nav:
    case EnvKind::rooms_nav: return 1;
    case EnvKind::card_points: return 3;
    case EnvKind::tiny_shop: return 3;
  }
  return 0;
}

std::unique_ptr<Env> make_env(const EnvSpec& spec) {
  EnvSpec s = spec;
  s.resolve_defaults();
  switch (s.kind) {
    case EnvKind::hallway_nav:
    case EnvKind::rooms_nav: return envs::make_nav_env(s);
    case EnvKind::card_points: return envs::make_card_env(s);
    case EnvKind::tiny_shop: return envs::make_shop_env(s);
  }
  throw SpecError("unknown env kind");
}

ActionEmission wrap_action_tokens(const std::vector<int>& span_tokens) {
  ActionEmission e;
  e.tokens.push_back(Vocabulary::kBos);
  e.tokens.push_back(Vocabulary::kSep);
  e.sep_pos = 1;
  for (int t : span_tokens) e.tokens.push_back(t);
  e.tokens.push_back(Vocabulary::kEos);
  e.logprobs.assign(e.tokens.size() - 1, 0.0);
  return e;
}

int success_oracle(const EnvSpec& spec, std::uint64_t episode_seed) {
  auto env = make_env(spec);
  env->reset(episode_seed);
  int steps = 0;
  while (!env->done()) {
    auto emission = wrap_action_tokens(env->expert_action_tokens());
    auto parsed = parse_action(emission, env->vocab(), env->spec().kind);
    auto out = env->step(parsed);
    ++steps;
    if (out.done) {
      if (!out.success)
        throw SpecError("expert failed on " + std::string(env_kind_name(spec.kind)) + " seed " +
                        std::to_string(episode_seed));
      return steps;
    }
  }
  throw SpecError("expert ran out of horizon");
}

}  // namespace vldac
