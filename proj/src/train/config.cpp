#include "vldac/train/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "vldac/errors.hpp"
#include "vldac/utils/hash.hpp"

namespace vldac::train {

const char* algo_name(Algo a) {
  switch (a) {
    case Algo::vldac: return "vldac";
    case Algo::rl4vlm: return "rl4vlm";
    case Algo::loop: return "loop";
    case Algo::td: return "td";
  }
  throw ConfigError("bad algo enum");
}

Algo algo_from_name(const std::string& name) {
  if (name == "vldac") return Algo::vldac;
  if (name == "rl4vlm") return Algo::rl4vlm;
  if (name == "loop") return Algo::loop;
  if (name == "td") return Algo::td;
  throw ConfigError("unknown algo '" + name + "' (vldac, rl4vlm, loop, td)");
}

TrainConfig TrainConfig::defaults_for(Algo a) {
  TrainConfig cfg;
  cfg.algo = a;
  switch (a) {
    case Algo::vldac:
      break;
    case Algo::rl4vlm:
      cfg.beta = 0.0;
      cfg.warmup_updates = 0;
      cfg.stop_grad_value = false;
      break;
    case Algo::loop:
      cfg.beta = 0.0;
      cfg.warmup_updates = 0;
      cfg.alpha = 0.0;
      break;
    case Algo::td:
      cfg.beta = 0.0;
      cfg.warmup_updates = 0;
      break;
  }
  return cfg;
}

void TrainConfig::resolve() {
  env.resolve_defaults();
  if (run_name.empty())
    run_name = std::string(algo_name(algo)) + "_" + env_kind_name(env.kind) + "_s" +
               std::to_string(seed);
}

void TrainConfig::validate() const {
  env.validate();
  auto bad = [](const std::string& msg) { throw ConfigError(msg); };
  if (total_env_steps < 1 || total_env_steps > 100'000'000) bad("total_env_steps out of range");
  if (segment_len < 1 || segment_len > 1'000'000) bad("segment_len out of range");
  if (num_envs < 1 || num_envs > 256) bad("num_envs out of range");
  if (algo != Algo::loop) {
    if (segment_len % num_envs != 0) bad("segment_len must be divisible by num_envs");
    if (total_env_steps % segment_len != 0) bad("total_env_steps must be divisible by segment_len");
  }
  if (lr_start <= 0 || lr_end <= 0 || lr_end > lr_start) bad("need lr_start >= lr_end > 0");
  if (ppo_epochs < 1 || ppo_epochs > 64) bad("ppo_epochs out of range");
  if (grad_accum < 1 || grad_accum > 100'000) bad("grad_accum out of range");
  if (minibatch < 1 || minibatch > 1024) bad("minibatch out of range");
  if (max_grad_norm < 0) bad("max_grad_norm must be >= 0 (0 disables clipping)");
  if (clip_eps <= 0 || clip_eps >= 1) bad("clip_eps must be in (0,1)");
  if (alpha < 0 || beta < 0) bad("alpha/beta must be >= 0");
  if (warmup_updates < 0 || warmup_updates > 1000) bad("warmup_updates out of range");
  if (gamma <= 0 || gamma > 1) bad("gamma must be in (0,1]");
  if (gae_lambda < 0 || gae_lambda > 1) bad("gae_lambda must be in [0,1]");
  if (rl4vlm_lambda < 0 || rl4vlm_lambda > 1) bad("rl4vlm_lambda must be in [0,1]");
  if (loop_k < 2 || loop_k > 64) bad("loop_k must be in [2,64]");
  if (replay_capacity < 1 || replay_capacity > 10'000'000) bad("replay_capacity out of range");
  if (polyak_tau <= 0 || polyak_tau > 1) bad("polyak_tau must be in (0,1]");
  if (td_value_iters < 1 || td_value_iters > 1000) bad("td_value_iters out of range");
  if (td_value_batch < 1 || td_value_batch > 100'000) bad("td_value_batch out of range");
  if (eval_episodes < 1 || eval_episodes > 10'000) bad("eval_episodes out of range");
  if (eval_every < 1) bad("eval_every must be >= 1");
  if (checkpoint_every < 1) bad("checkpoint_every must be >= 1");
  if (format_pretrain_steps < 0 || format_pretrain_steps > 100'000)
    bad("format_pretrain_steps out of range");
  if (format_pretrain_lr <= 0 || format_pretrain_lr > 1) bad("format_pretrain_lr out of range");
  if (format_pretrain_batch < 1 || format_pretrain_batch > 4096)
    bad("format_pretrain_batch out of range");
  policy.validate();
}

std::int64_t TrainConfig::total_updates() const {
  return (total_env_steps + segment_len - 1) / segment_len;
}

int edit_distance(const std::string& a, const std::string& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int> row(m + 1);
  for (size_t j = 0; j <= m; ++j) row[j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    int prev = row[0];
    row[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int cur = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, prev + (a[i - 1] == b[j - 1] ? 0 : 1)});
      prev = cur;
    }
  }
  return row[m];
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::int64_t to_i64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const std::int64_t r = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected integer, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const std::uint64_t r = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected unsigned integer, got '" + v + "'");
  }
}

double to_f64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

// One row per key keeps dump, parse, and the suggestion list in lockstep.
struct KeyDef {
  const char* section;
  const char* key;
  std::string (*get)(const TrainConfig&);
  void (*set)(TrainConfig&, const std::string&);
};

#define KEYS_STR(sec, name, field)                                          \
  {sec, name, [](const TrainConfig& c) { return c.field; },                 \
   [](TrainConfig& c, const std::string& v) { c.field = v; }}
#define KEYS_I(sec, name, field, T)                                         \
  {sec, name, [](const TrainConfig& c) { return std::to_string(c.field); }, \
   [](TrainConfig& c, const std::string& v) { c.field = static_cast<T>(to_i64(name, v)); }}
#define KEYS_F(sec, name, field)                                            \
  {sec, name, [](const TrainConfig& c) { return fmt_double(c.field); },     \
   [](TrainConfig& c, const std::string& v) { c.field = to_f64(name, v); }}
#define KEYS_B(sec, name, field)                                            \
  {sec, name, [](const TrainConfig& c) { return std::string(c.field ? "true" : "false"); }, \
   [](TrainConfig& c, const std::string& v) { c.field = to_bool(name, v); }}

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      {"run", "algo", [](const TrainConfig& c) { return std::string(algo_name(c.algo)); },
       [](TrainConfig& c, const std::string& v) { c.algo = algo_from_name(v); }},
      KEYS_STR("run", "run_name", run_name),
      KEYS_STR("run", "out_root", out_root),
      {"run", "seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
       [](TrainConfig& c, const std::string& v) { c.seed = to_u64("seed", v); }},
      KEYS_I("run", "total_env_steps", total_env_steps, std::int64_t),
      KEYS_I("run", "eval_episodes", eval_episodes, int),
      KEYS_I("run", "eval_every", eval_every, int),
      KEYS_I("run", "checkpoint_every", checkpoint_every, int),
      KEYS_B("run", "dump_eval_trajectories", dump_eval_trajectories),

      {"env", "env", [](const TrainConfig& c) { return std::string(env_kind_name(c.env.kind)); },
       [](TrainConfig& c, const std::string& v) { c.env.kind = env_kind_from_name(v); }},
      {"env", "reward",
       [](const TrainConfig& c) { return std::string(reward_scheme_name(c.env.reward)); },
       [](TrainConfig& c, const std::string& v) { c.env.reward = reward_scheme_from_name(v); }},
      {"env", "layout",
       [](const TrainConfig& c) {
         return std::string(c.env.layout == RoomsLayout::one_room ? "one_room" : "wall_gap");
       },
       [](TrainConfig& c, const std::string& v) {
         if (v == "one_room") c.env.layout = RoomsLayout::one_room;
         else if (v == "wall_gap") c.env.layout = RoomsLayout::wall_gap;
         else throw ConfigError("key 'layout': expected one_room or wall_gap, got '" + v + "'");
       }},
      KEYS_I("env", "horizon", env.horizon, int),
      KEYS_I("env", "frame_stack", env.frame_stack, int),

      KEYS_I("rollout", "segment_len", segment_len, int),
      KEYS_I("rollout", "num_envs", num_envs, int),

      KEYS_F("optim", "lr_start", lr_start),
      KEYS_F("optim", "lr_end", lr_end),
      KEYS_I("optim", "ppo_epochs", ppo_epochs, int),
      KEYS_I("optim", "grad_accum", grad_accum, int),
      KEYS_I("optim", "minibatch", minibatch, int),
      KEYS_F("optim", "max_grad_norm", max_grad_norm),

      KEYS_F("objective", "clip_eps", clip_eps),
      KEYS_F("objective", "alpha", alpha),
      KEYS_F("objective", "beta", beta),
      KEYS_I("objective", "warmup_updates", warmup_updates, int),
      KEYS_B("objective", "stop_grad_value", stop_grad_value),
      KEYS_F("objective", "gamma", gamma),
      KEYS_F("objective", "gae_lambda", gae_lambda),
      KEYS_B("objective", "normalize_adv", normalize_adv),

      KEYS_F("rl4vlm", "rl4vlm_lambda", rl4vlm_lambda),
      KEYS_I("loop", "loop_k", loop_k, int),
      KEYS_I("td", "replay_capacity", replay_capacity, int),
      KEYS_F("td", "polyak_tau", polyak_tau),
      KEYS_B("td", "td_on_policy", td_on_policy),
      KEYS_I("td", "td_value_iters", td_value_iters, int),
      KEYS_I("td", "td_value_batch", td_value_batch, int),

      KEYS_I("policy", "format_pretrain_steps", format_pretrain_steps, int),
      KEYS_F("policy", "format_pretrain_lr", format_pretrain_lr),
      KEYS_I("policy", "format_pretrain_batch", format_pretrain_batch, int),
      KEYS_I("policy", "feature_dim", policy.feature_dim, int),
      KEYS_I("policy", "backbone_hidden", policy.backbone_hidden, int),
      KEYS_I("policy", "ctx_embed", policy.ctx_embed, int),
      KEYS_I("policy", "tok_embed", policy.tok_embed, int),
      KEYS_I("policy", "head_hidden", policy.head_hidden, int),
      KEYS_I("policy", "value_hidden", policy.value_hidden, int),
      KEYS_I("policy", "max_tokens", policy.max_tokens, int),
  };
  return table;
}

#undef KEYS_STR
#undef KEYS_I
#undef KEYS_F
#undef KEYS_B

const KeyDef* find_key(const std::string& key) {
  for (const auto& def : key_table())
    if (key == def.key) return &def;
  return nullptr;
}

[[noreturn]] void unknown_key(const std::string& key) {
  int best = 1 << 20;
  std::string suggestion;
  for (const auto& def : key_table()) {
    const int d = edit_distance(key, def.key);
    if (d < best) {
      best = d;
      suggestion = def.key;
    }
  }
  std::string msg = "unknown config key '" + key + "'";
  if (best <= 3) msg += "; did you mean '" + suggestion + "'?";
  throw ConfigError(msg);
}

}  // namespace

TrainConfig parse_config(std::istream& in,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto pos = line.find_first_of("#;"); pos != std::string::npos) line.erase(pos);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      continue;  // sections only organize the file
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!find_key(key)) unknown_key(key);
    if (kv.count(key)) throw ConfigError("duplicate config key '" + key + "'");
    kv[key] = value;
  }
  for (const auto& [key, value] : overrides) {
    if (!find_key(key)) unknown_key(key);
    kv[key] = value;
  }

  Algo algo = Algo::vldac;
  if (auto it = kv.find("algo"); it != kv.end()) algo = algo_from_name(it->second);
  TrainConfig cfg = TrainConfig::defaults_for(algo);
  for (const auto& [key, value] : kv) find_key(key)->set(cfg, value);
  cfg.resolve();
  cfg.validate();
  return cfg;
}

TrainConfig parse_config(std::istream& in) { return parse_config(in, {}); }

TrainConfig parse_config_file(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  return parse_config(in, overrides);
}

TrainConfig parse_config_file(const std::string& path) { return parse_config_file(path, {}); }

std::string dump_config(const TrainConfig& cfg) {
  std::ostringstream os;
  const char* section = "";
  for (const auto& def : key_table()) {
    if (std::string_view(section) != def.section) {
      section = def.section;
      os << "[" << section << "]\n";
    }
    os << def.key << " = " << def.get(cfg) << "\n";
  }
  return os.str();
}

std::uint64_t config_fingerprint(const TrainConfig& cfg) {
  return fnv1a64(dump_config(cfg));
}

}  // namespace vldac::train
