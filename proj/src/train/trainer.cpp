#include "vldac/train/trainer.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vldac/algos/advantage.hpp"
#include "vldac/algos/losses.hpp"
#include "vldac/errors.hpp"
#include "vldac/train/format.hpp"
#include "vldac/utils/serialize.hpp"

namespace vldac::train {

namespace {
constexpr std::uint64_t kTagInit = 0x696E6974;    // parameter init stream
constexpr std::uint64_t kTagUpdate = 0x757064;    // shuffles + replay sampling
constexpr std::uint64_t kTagFmt = 0x666D74;       // format pretraining stream
constexpr const char* kCkptMagic = "vldac-ckpt-1";
}  // namespace

Trainer::Trainer(const TrainConfig& cfg) : cfg_(cfg) {
  cfg_.resolve();
  cfg_.validate();
  cfg_.policy.stop_grad_value = cfg_.stop_grad_value;
  init_members();
}

void Trainer::init_members() {
  const Vocabulary vocab = Vocabulary::for_kind(cfg_.env.kind);
  policy_ = std::make_unique<policy::TokenPolicy>(vocab, cfg_.env.obs_dims(), cfg_.policy,
                                                  derive_seed(cfg_.seed, {kTagInit}));
  format_pretrain(*policy_, cfg_.env, cfg_.format_pretrain_steps, cfg_.format_pretrain_lr,
                  cfg_.format_pretrain_batch, derive_seed(cfg_.seed, {kTagFmt}));
  if (cfg_.algo == Algo::loop)
    loop_ = std::make_unique<LoopRollout>(cfg_.env, cfg_.loop_k, cfg_.gamma, cfg_.seed);
  else
    vec_ = std::make_unique<VecRollout>(cfg_.env, cfg_.num_envs, cfg_.seed);
  if (cfg_.algo == Algo::td)
    target_ = std::make_unique<policy::TokenPolicy>(policy_->snapshot());
  update_rng_ = Rng(derive_seed(cfg_.seed, {kTagUpdate}));

  const std::int64_t accum_target =
      static_cast<std::int64_t>(cfg_.grad_accum) * cfg_.minibatch;
  const std::int64_t per_update_actor =
      cfg_.ppo_epochs * ((cfg_.segment_len + accum_target - 1) / accum_target);
  const std::int64_t per_update =
      per_update_actor + (cfg_.algo == Algo::td ? cfg_.td_value_iters : 0);
  total_opt_steps_ = cfg_.total_updates() * per_update;
}

std::string Trainer::out_dir() const {
  std::string root = cfg_.out_root;
  if (root.empty()) {
    const char* env_root = std::getenv("VLDAC_OUT_ROOT");
    root = env_root && *env_root ? env_root : "runs";
  }
  return root + "/" + cfg_.run_name;
}

void Trainer::ensure_out_dir() const { std::filesystem::create_directories(out_dir()); }

Segment Trainer::collect_segment() {
  if (cfg_.algo == Algo::loop) return loop_->collect(*policy_, cfg_.segment_len);
  return vec_->collect(*policy_, cfg_.steps_per_env());
}

std::vector<Trainer::Item> Trainer::build_items(const Segment& seg) const {
  std::vector<Item> items;
  items.reserve(static_cast<size_t>(seg.env_steps()));
  switch (cfg_.algo) {
    case Algo::vldac:
    case Algo::rl4vlm: {
      const algos::GaeConfig gae{cfg_.gamma, cfg_.gae_lambda};
      for (const auto& tr : seg.traces) {
        const size_t n = tr.steps.size();
        std::vector<double> rewards(n), values(n);
        std::vector<std::uint8_t> dones(n);
        for (size_t t = 0; t < n; ++t) {
          rewards[t] = tr.steps[t].reward;
          values[t] = tr.steps[t].old_value;
          dones[t] = tr.steps[t].done ? 1 : 0;
        }
        const auto ar = algos::gae_advantages(rewards, values, dones, tr.bootstrap_value, gae);
        for (size_t t = 0; t < n; ++t)
          items.push_back({&tr.steps[t], ar.advantages[t], ar.value_targets[t]});
      }
      break;
    }
    case Algo::loop: {
      for (const auto& tr : seg.traces)
        for (const auto& step : tr.steps) items.push_back({&step, tr.loop_advantage, 0.0});
      break;
    }
    case Algo::td: {
      // one-step TD residual under the soft target network
      for (const auto& tr : seg.traces)
        for (const auto& step : tr.steps) {
          const double next_v = step.done ? 0.0 : target_->value_detached(step.next_obs);
          const double delta = algos::td_target(step.reward, step.done, next_v, cfg_.gamma) -
                               target_->value_detached(step.obs);
          items.push_back({&step, delta, 0.0});
        }
      break;
    }
  }
  if (cfg_.normalize_adv && cfg_.algo != Algo::loop) {
    std::vector<double> adv(items.size());
    for (size_t i = 0; i < items.size(); ++i) adv[i] = items[i].advantage;
    algos::normalize_advantages(adv);
    for (size_t i = 0; i < items.size(); ++i) items[i].advantage = adv[i];
  }
  return items;
}

Trainer::LossParts Trainer::item_loss(const Item& item, bool value_only) const {
  const StepRecord& rec = *item.rec;
  LossParts parts;
  if (value_only) {
    auto vl = algos::value_step_loss(policy_->value(rec.obs), item.value_target);
    parts.value_part = vl.value();
    parts.loss = diff::scale(vl, cfg_.alpha);
    return parts;
  }

  const auto scored = policy_->score_sequence(rec.obs, rec.emission.tokens);
  const int positions = scored.positions();

  diff::Tensor policy_loss;
  if (cfg_.algo == Algo::rl4vlm) {
    const auto tspan = rec.emission.thought_span();
    auto thought = scored.span_logprob(tspan);
    auto rest = diff::sub(scored.total_logprob(), thought);
    auto mixed = algos::mixed_logprob(thought, rest, cfg_.rl4vlm_lambda);
    double old_total = 0.0, old_thought = 0.0;
    for (size_t i = 0; i < rec.emission.logprobs.size(); ++i) old_total += rec.emission.logprobs[i];
    for (int pos = tspan.first; pos < tspan.second; ++pos)
      old_thought += rec.emission.logprobs[static_cast<size_t>(pos - 1)];
    const double old_mixed = cfg_.rl4vlm_lambda * old_thought + (old_total - old_thought);
    policy_loss = algos::step_clip_loss(mixed, old_mixed, item.advantage, cfg_.clip_eps);
  } else {
    std::vector<diff::Tensor> gathered;
    gathered.reserve(static_cast<size_t>(positions));
    std::vector<double> old_probs(static_cast<size_t>(positions));
    for (int i = 0; i < positions; ++i) {
      const int tok = rec.emission.tokens[static_cast<size_t>(i) + 1];
      gathered.push_back(diff::gather_index(scored.dist_rows[static_cast<size_t>(i)], {tok}));
      old_probs[static_cast<size_t>(i)] = rec.old_dists[static_cast<size_t>(i)][static_cast<size_t>(tok)];
    }
    policy_loss = algos::token_clip_step_loss(gathered, old_probs, item.advantage, cfg_.clip_eps);
  }
  parts.policy_part = policy_loss.value();
  diff::Tensor loss = policy_loss;

  if (cfg_.beta > 0) {
    auto kl = algos::kl_penalty(scored.dist_rows, rec.old_dists);
    parts.kl_part = kl.value();
    loss = diff::add(loss, diff::scale(kl, cfg_.beta));
  }
  if (cfg_.algo == Algo::vldac || cfg_.algo == Algo::rl4vlm) {
    auto vl = algos::value_step_loss(scored.value, item.value_target);
    parts.value_part = vl.value();
    loss = diff::add(loss, diff::scale(vl, cfg_.alpha));
  }
  parts.loss = loss;
  return parts;
}

void Trainer::run_epochs(const std::vector<Item>& items, bool value_only, UpdateStats& stats) {
  NamedParams group = value_only ? policy_->value_params()
                      : (cfg_.algo == Algo::loop || cfg_.algo == Algo::td)
                          ? policy_->policy_params()
                          : policy_->all_params();
  NamedParams everything = policy_->all_params();
  const int accum_target = cfg_.grad_accum * cfg_.minibatch;

  double pol_sum = 0, kl_sum = 0, val_sum = 0, tot_sum = 0;
  std::int64_t visits = 0;
  double norm_sum = stats.grad_norm;  // carries the critic phase's sum for td
  int norm_count = static_cast<int>(stats.opt_steps);

  std::vector<int> order(items.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg_.ppo_epochs; ++epoch) {
    shuffle(order, update_rng_);
    Adam::zero_grad(everything);
    int accum = 0;
    for (size_t pos = 0; pos < order.size(); ++pos) {
      const Item& item = items[static_cast<size_t>(order[pos])];
      LossParts lp = item_loss(item, value_only);
      diff::backward(lp.loss);
      pol_sum += lp.policy_part;
      kl_sum += lp.kl_part;
      val_sum += lp.value_part;
      tot_sum += lp.loss.value();
      visits += 1;
      accum += 1;
      if (accum == accum_target || pos + 1 == order.size()) {
        stats.lr = algos::cosine_lr(opt_steps_, total_opt_steps_, cfg_.lr_start, cfg_.lr_end);
        norm_sum += adam_.step(group, stats.lr, 1.0 / accum, cfg_.max_grad_norm);
        norm_count += 1;
        opt_steps_ += 1;
        accum = 0;
        Adam::zero_grad(everything);
      }
    }
  }

  stats.loss_policy = visits ? pol_sum / static_cast<double>(visits) : 0.0;
  stats.loss_kl = visits ? kl_sum / static_cast<double>(visits) : 0.0;
  stats.loss_total = visits ? tot_sum / static_cast<double>(visits) : 0.0;
  const double val_mean = visits ? val_sum / static_cast<double>(visits) : 0.0;
  if (value_only || cfg_.algo == Algo::vldac || cfg_.algo == Algo::rl4vlm)
    stats.loss_value = val_mean;
  stats.grad_norm = norm_count ? norm_sum / norm_count : 0.0;
  stats.opt_steps = 0;  // scratch use ends here; run_update sets the real value
}

void Trainer::push_replay(const Segment& seg) {
  for (const auto& tr : seg.traces)
    for (const auto& step : tr.steps) {
      Transition t{step.obs, step.next_obs, step.reward,
                   static_cast<std::uint8_t>(step.done ? 1 : 0)};
      if (replay_.size() < static_cast<size_t>(cfg_.replay_capacity)) {
        replay_.push_back(std::move(t));
      } else {
        replay_[replay_pos_] = std::move(t);
        replay_pos_ = (replay_pos_ + 1) % replay_.size();
      }
    }
}

void Trainer::critic_phase(const Segment& seg, UpdateStats& stats) {
  std::vector<Transition> fresh;
  if (cfg_.td_on_policy) {
    for (const auto& tr : seg.traces)
      for (const auto& step : tr.steps)
        fresh.push_back({step.obs, step.next_obs, step.reward,
                         static_cast<std::uint8_t>(step.done ? 1 : 0)});
  }
  const std::vector<Transition>& source = cfg_.td_on_policy ? fresh : replay_;
  if (source.empty()) return;

  NamedParams vgroup = policy_->value_params();
  NamedParams everything = policy_->all_params();
  NamedParams target_params = target_->all_params();
  NamedParams live_params = policy_->all_params();
  const int batch = std::min<int>(cfg_.td_value_batch, static_cast<int>(source.size()));

  double val_sum = 0;
  std::int64_t visits = 0;
  double norm_sum = 0;
  int norm_count = 0;
  for (int iter = 0; iter < cfg_.td_value_iters; ++iter) {
    Adam::zero_grad(everything);
    for (int b = 0; b < batch; ++b) {
      const Transition& t = source[static_cast<size_t>(
          update_rng_.uniform_int(static_cast<int>(source.size())))];
      const double next_v = t.done ? 0.0 : target_->value_detached(t.next_obs);
      const double target = algos::td_target(t.reward, t.done != 0, next_v, cfg_.gamma);
      auto vl = algos::value_step_loss(policy_->value(t.obs), target);
      diff::backward(vl);
      val_sum += vl.value();
      visits += 1;
    }
    stats.lr = algos::cosine_lr(opt_steps_, total_opt_steps_, cfg_.lr_start, cfg_.lr_end);
    norm_sum += adam_.step(vgroup, stats.lr, 1.0 / batch, cfg_.max_grad_norm);
    norm_count += 1;
    opt_steps_ += 1;
    polyak_update(target_params, live_params, cfg_.polyak_tau);
  }
  Adam::zero_grad(everything);
  stats.loss_value = visits ? val_sum / static_cast<double>(visits) : 0.0;
  // stash the critic phase's norm contributions for run_epochs to merge
  stats.grad_norm = norm_sum;
  stats.opt_steps = norm_count;
}

UpdateStats Trainer::run_update() {
  update_ += 1;
  Segment seg = collect_segment();
  env_steps_ += seg.env_steps();

  UpdateStats stats;
  stats.update = update_;
  stats.parse_rate = seg.parse_rate();
  stats.train_episodes = seg.episodes_done;
  if (seg.episodes_done > 0) {
    stats.train_sr = static_cast<double>(seg.episodes_succeeded) / seg.episodes_done;
    stats.train_return = seg.episode_return_sum / seg.episodes_done;
  }

  if (cfg_.algo == Algo::td) {
    push_replay(seg);
    critic_phase(seg, stats);
  }
  const auto items = build_items(seg);
  const bool value_only = update_ <= cfg_.warmup_updates;
  run_epochs(items, value_only, stats);

  stats.env_steps = env_steps_;
  stats.opt_steps = opt_steps_;
  return stats;
}

EvalResult Trainer::evaluate(std::ostream* traj_out) const {
  return greedy_eval(*policy_, cfg_.env, cfg_.seed, cfg_.eval_episodes, traj_out);
}

std::string Trainer::metrics_line(const UpdateStats& s) {
  nlohmann::json j;
  j["update"] = s.update;
  j["env_steps"] = s.env_steps;
  j["opt_steps"] = s.opt_steps;
  j["loss_policy"] = s.loss_policy;
  j["loss_kl"] = s.loss_kl;
  j["loss_value"] = s.loss_value;
  j["loss_total"] = s.loss_total;
  j["grad_norm"] = s.grad_norm;
  j["lr"] = s.lr;
  j["parse_rate"] = s.parse_rate;
  j["train_episodes"] = s.train_episodes;
  if (s.train_episodes > 0) {
    j["train_sr"] = s.train_sr;
    j["train_return"] = s.train_return;
  } else {
    j["train_sr"] = nullptr;
    j["train_return"] = nullptr;
  }
  if (s.has_eval) {
    j["eval_sr"] = s.eval_sr;
    j["eval_return"] = s.eval_return;
  }
  return j.dump();
}

void Trainer::append_metrics(const UpdateStats& s) {
  ensure_out_dir();
  std::ofstream os(metrics_path(), std::ios::app);
  if (!os) throw IoError("cannot open metrics file: " + metrics_path());
  os << metrics_line(s) << "\n";
  metrics_lines_ += 1;
}

void Trainer::run(const std::function<void(const UpdateStats&)>& on_update) {
  ensure_out_dir();
  {
    std::ofstream cfg_out(config_path());
    cfg_out << dump_config(cfg_);
  }
  while (!finished()) {
    UpdateStats s = run_update();
    if (update_ % cfg_.eval_every == 0 || finished()) {
      std::ofstream traj;
      std::ostream* traj_ptr = nullptr;
      if (cfg_.dump_eval_trajectories) {
        traj.open(trajectories_path(), std::ios::trunc);
        traj_ptr = &traj;
      }
      const EvalResult er = evaluate(traj_ptr);
      s.has_eval = true;
      s.eval_sr = er.success_rate();
      s.eval_return = er.mean_return();
    }
    append_metrics(s);
    if (on_update) on_update(s);
    if (update_ % cfg_.checkpoint_every == 0 || finished()) save_checkpoint();
  }
}

void Trainer::save_checkpoint() const {
  ensure_out_dir();
  std::ofstream os(checkpoint_path(), std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + checkpoint_path());
  ser::write_string(os, kCkptMagic);
  ser::write_string(os, dump_config(cfg_));
  ser::write_u64(os, config_fingerprint(cfg_));
  ser::write_i64(os, update_);
  ser::write_i64(os, env_steps_);
  ser::write_i64(os, opt_steps_);
  ser::write_i64(os, metrics_lines_);
  policy_->save_params(os);
  adam_.save(os);
  for (std::uint64_t w : update_rng_.state()) ser::write_u64(os, w);
  if (cfg_.algo == Algo::loop)
    loop_->save(os);
  else
    vec_->save(os);
  if (cfg_.algo == Algo::td) {
    target_->save_params(os);
    ser::write_u64(os, replay_.size());
    ser::write_u64(os, replay_pos_);
    for (const auto& t : replay_) {
      write_observation(os, t.obs);
      write_observation(os, t.next_obs);
      ser::write_f64(os, t.reward);
      ser::write_u8(os, t.done);
    }
  }
  if (!os) throw IoError("checkpoint write failed: " + checkpoint_path());
}

std::unique_ptr<Trainer> Trainer::resume(const std::string& checkpoint_path) {
  std::ifstream is(checkpoint_path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + checkpoint_path);
  if (ser::read_string(is) != kCkptMagic)
    throw CheckpointError("not a trainer checkpoint: " + checkpoint_path);
  const std::string cfg_text = ser::read_string(is);
  std::istringstream cfg_in(cfg_text);
  const TrainConfig cfg = parse_config(cfg_in);
  if (ser::read_u64(is) != config_fingerprint(cfg))
    throw CheckpointError("checkpoint config fingerprint mismatch");

  auto t = std::unique_ptr<Trainer>(new Trainer(cfg));
  t->update_ = ser::read_i64(is);
  t->env_steps_ = ser::read_i64(is);
  t->opt_steps_ = ser::read_i64(is);
  t->metrics_lines_ = ser::read_i64(is);
  t->policy_->load_params(is);
  t->adam_.load(is);
  std::array<std::uint64_t, 4> st{};
  for (auto& w : st) w = ser::read_u64(is);
  t->update_rng_.set_state(st);
  if (cfg.algo == Algo::loop)
    t->loop_->load(is);
  else
    t->vec_->load(is);
  if (cfg.algo == Algo::td) {
    t->target_->load_params(is);
    const std::uint64_t n = ser::read_u64(is);
    t->replay_pos_ = ser::read_u64(is);
    t->replay_.clear();
    t->replay_.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      Transition tr;
      tr.obs = read_observation(is);
      tr.next_obs = read_observation(is);
      tr.reward = ser::read_f64(is);
      tr.done = ser::read_u8(is);
      t->replay_.push_back(std::move(tr));
    }
  }
  t->truncate_metrics_to(t->metrics_lines_);
  return t;
}

void Trainer::truncate_metrics_to(std::int64_t lines) const {
  std::ifstream in(metrics_path());
  if (!in) return;  // nothing to truncate
  std::string kept;
  std::string line;
  std::int64_t n = 0;
  while (n < lines && std::getline(in, line)) {
    kept += line;
    kept += '\n';
    n += 1;
  }
  in.close();
  std::ofstream out(metrics_path(), std::ios::trunc);
  out << kept;
}

}  // namespace vldac::train
