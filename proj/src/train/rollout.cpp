#include "vldac/train/rollout.hpp"

#include <json.hpp>

#include "vldac/algos/advantage.hpp"
#include "vldac/errors.hpp"
#include "vldac/utils/serialize.hpp"

namespace vldac::train {

namespace {
// derive_seed path tags (ascii), one per independent stream family
constexpr std::uint64_t kTagEpisode = 0x657069;   // per-slot episode seeds
constexpr std::uint64_t kTagSampler = 0x736D70;   // per-slot action sampling
constexpr std::uint64_t kTagTask = 0x74736B;      // replay-group start states
constexpr std::uint64_t kTagLoopRng = 0x6C6F6F70; // replay-group sampling
constexpr std::uint64_t kTagEval = 0x6576616C;    // evaluation episodes
}  // namespace

std::int64_t Segment::env_steps() const {
  std::int64_t n = 0;
  for (const auto& tr : traces) n += static_cast<std::int64_t>(tr.steps.size());
  return n;
}

double Segment::parse_rate() const {
  std::int64_t ok = 0, n = 0;
  for (const auto& tr : traces)
    for (const auto& s : tr.steps) {
      ++n;
      ok += s.parse_ok ? 1 : 0;
    }
  return n ? static_cast<double>(ok) / static_cast<double>(n) : 0.0;
}

void write_observation(std::ostream& os, const Observation& obs) {
  ser::write_u32(os, static_cast<std::uint32_t>(obs.dims.frame_stack));
  ser::write_u32(os, static_cast<std::uint32_t>(obs.dims.channels));
  ser::write_u32(os, static_cast<std::uint32_t>(obs.dims.height));
  ser::write_u32(os, static_cast<std::uint32_t>(obs.dims.width));
  ser::write_u32(os, static_cast<std::uint32_t>(obs.dims.context_len));
  ser::write_vec_u8(os, obs.cells);
  ser::write_vec_i32(os, obs.context_tokens);
}

Observation read_observation(std::istream& is) {
  Observation obs;
  obs.dims.frame_stack = static_cast<int>(ser::read_u32(is));
  obs.dims.channels = static_cast<int>(ser::read_u32(is));
  obs.dims.height = static_cast<int>(ser::read_u32(is));
  obs.dims.width = static_cast<int>(ser::read_u32(is));
  obs.dims.context_len = static_cast<int>(ser::read_u32(is));
  obs.cells = ser::read_vec_u8(is);
  obs.context_tokens = ser::read_vec_i32(is);
  obs.validate();
  return obs;
}

namespace {

// Sample one action, freeze the rollout policy's view of it, and advance env.
StepRecord record_step(const policy::TokenPolicy& pol, Env& env, const Observation& obs,
                       Rng& rng) {
  StepRecord rec;
  rec.obs = obs;
  rec.emission = pol.sample_action(obs, rng);
  auto scored = pol.score_sequence(obs, rec.emission.tokens);
  rec.old_dists = scored.dist_values();
  rec.old_value = scored.value.value();
  const ParsedAction parsed = parse_action(rec.emission, env.vocab(), env.spec().kind);
  const StepOutcome out = env.step(parsed);
  rec.next_obs = out.obs;
  rec.reward = out.reward;
  rec.done = out.done;
  rec.success = out.success;
  rec.parse_ok = out.parse_ok;
  return rec;
}

}  // namespace

VecRollout::VecRollout(const EnvSpec& spec, int num_envs, std::uint64_t master_seed)
    : master_seed_(master_seed) {
  slots_.resize(static_cast<size_t>(num_envs));
  for (size_t i = 0; i < slots_.size(); ++i) {
    auto& slot = slots_[i];
    slot.env = make_env(spec);
    slot.rng = Rng(derive_seed(master_seed_, {kTagSampler, i}));
    slot.pending = slot.env->reset(derive_seed(master_seed_, {kTagEpisode, i, 0}));
  }
}

Segment VecRollout::collect(const policy::TokenPolicy& pol, int steps_per_env) {
  diff::NoGradGuard guard;
  Segment seg;
  seg.traces.reserve(slots_.size());
  for (size_t i = 0; i < slots_.size(); ++i) {
    auto& slot = slots_[i];
    EnvTrace tr;
    tr.steps.reserve(static_cast<size_t>(steps_per_env));
    for (int t = 0; t < steps_per_env; ++t) {
      StepRecord rec = record_step(pol, *slot.env, slot.pending, slot.rng);
      slot.episode_return += rec.reward;
      if (rec.done) {
        seg.episodes_done += 1;
        seg.episodes_succeeded += rec.success ? 1 : 0;
        seg.episode_return_sum += slot.episode_return;
        slot.episode_return = 0.0;
        slot.episode_index += 1;
        slot.pending = slot.env->reset(
            derive_seed(master_seed_, {kTagEpisode, i, static_cast<std::uint64_t>(slot.episode_index)}));
        rec.next_obs = slot.pending;
      } else {
        slot.pending = rec.next_obs;
      }
      tr.steps.push_back(std::move(rec));
    }
    tr.bootstrap_value = tr.steps.back().done ? 0.0 : pol.value_detached(slot.pending);
    seg.traces.push_back(std::move(tr));
  }
  return seg;
}

void VecRollout::save(std::ostream& os) const {
  ser::write_u64(os, master_seed_);
  ser::write_u64(os, slots_.size());
  for (const auto& slot : slots_) {
    slot.env->save(os);
    for (std::uint64_t w : slot.rng.state()) ser::write_u64(os, w);
    ser::write_i64(os, slot.episode_index);
    write_observation(os, slot.pending);
    ser::write_f64(os, slot.episode_return);
  }
}

void VecRollout::load(std::istream& is) {
  master_seed_ = ser::read_u64(is);
  const std::uint64_t n = ser::read_u64(is);
  if (n != slots_.size()) throw CheckpointError("rollout snapshot has a different env count");
  for (auto& slot : slots_) {
    slot.env->load(is);
    std::array<std::uint64_t, 4> st{};
    for (auto& w : st) w = ser::read_u64(is);
    slot.rng.set_state(st);
    slot.episode_index = ser::read_i64(is);
    slot.pending = read_observation(is);
    slot.episode_return = ser::read_f64(is);
  }
}

LoopRollout::LoopRollout(const EnvSpec& spec, int loop_k, double gamma, std::uint64_t master_seed)
    : env_(make_env(spec)),
      loop_k_(loop_k),
      gamma_(gamma),
      master_seed_(master_seed),
      rng_(derive_seed(master_seed, {kTagLoopRng})) {}

Segment LoopRollout::collect(const policy::TokenPolicy& pol, int min_steps) {
  diff::NoGradGuard guard;
  Segment seg;
  std::int64_t steps = 0;
  while (steps < min_steps) {
    const std::uint64_t seed =
        derive_seed(master_seed_, {kTagTask, static_cast<std::uint64_t>(task_index_)});
    task_index_ += 1;
    std::vector<double> discounted;
    const size_t group_start = seg.traces.size();
    for (int k = 0; k < loop_k_; ++k) {
      Observation obs = env_->reset(seed);
      EnvTrace tr;
      double ret = 0.0, disc_ret = 0.0, disc = 1.0;
      while (!env_->done()) {
        StepRecord rec = record_step(pol, *env_, obs, rng_);
        obs = rec.next_obs;
        ret += rec.reward;
        disc_ret += disc * rec.reward;
        disc *= gamma_;
        steps += 1;
        const bool success = rec.success;
        tr.steps.push_back(std::move(rec));
        if (tr.steps.back().done) {
          seg.episodes_done += 1;
          seg.episodes_succeeded += success ? 1 : 0;
        }
      }
      seg.episode_return_sum += ret;
      discounted.push_back(disc_ret);
      seg.traces.push_back(std::move(tr));
    }
    const auto advs = algos::leave_one_out_advantages(discounted);
    for (size_t i = 0; i < advs.size(); ++i)
      seg.traces[group_start + i].loop_advantage = advs[i];
  }
  return seg;
}

void LoopRollout::save(std::ostream& os) const {
  ser::write_u64(os, master_seed_);
  env_->save(os);
  for (std::uint64_t w : rng_.state()) ser::write_u64(os, w);
  ser::write_i64(os, task_index_);
}

void LoopRollout::load(std::istream& is) {
  master_seed_ = ser::read_u64(is);
  env_->load(is);
  std::array<std::uint64_t, 4> st{};
  for (auto& w : st) w = ser::read_u64(is);
  rng_.set_state(st);
  task_index_ = ser::read_i64(is);
}

EvalResult greedy_eval(const policy::TokenPolicy& pol, const EnvSpec& spec,
                       std::uint64_t eval_seed, int episodes, std::ostream* traj_out) {
  diff::NoGradGuard guard;
  auto env = make_env(spec);
  Rng unused(0);  // greedy decoding never draws from it
  EvalResult res;
  for (int ep = 0; ep < episodes; ++ep) {
    const std::uint64_t seed = derive_seed(eval_seed, {kTagEval, static_cast<std::uint64_t>(ep)});
    Observation obs = env->reset(seed);
    double ret = 0.0;
    bool success = false;
    int steps = 0;
    nlohmann::json emissions = nlohmann::json::array();
    nlohmann::json rewards = nlohmann::json::array();
    while (!env->done()) {
      const ActionEmission em = pol.sample_action(obs, unused, /*greedy=*/true);
      const StepOutcome out = env->step(parse_action(em, env->vocab(), spec.kind));
      ret += out.reward;
      success = out.success;
      steps += 1;
      obs = out.obs;
      if (traj_out) {
        std::string text;
        for (size_t i = 1; i < em.tokens.size(); ++i) {
          if (!text.empty()) text += ' ';
          text += env->vocab().name(em.tokens[i]);
        }
        emissions.push_back({{"tokens", em.tokens}, {"text", text}});
        rewards.push_back(out.reward);
      }
    }
    res.episodes += 1;
    res.successes += success ? 1 : 0;
    res.return_sum += ret;
    if (traj_out) {
      nlohmann::json row = {{"episode", ep},     {"seed", seed},       {"steps", steps},
                            {"return", ret},     {"success", success}, {"emissions", emissions},
                            {"rewards", rewards}};
      *traj_out << row.dump() << "\n";
    }
  }
  if (traj_out) traj_out->flush();
  return res;
}

}  // namespace vldac::train
