#include "vldac/policy/policy.hpp"

#include <cmath>

#include "vldac/utils/serialize.hpp"

namespace vldac::policy {

using diff::Tensor;

void PolicyConfig::validate() const {
  for (int v : {feature_dim, backbone_hidden, ctx_embed, tok_embed, head_hidden, value_hidden})
    if (v < 1 || v > 4096) throw SpecError("policy dims must be in [1,4096]");
  if (max_tokens < 2 || max_tokens > 64)
    throw SpecError("max_tokens " + std::to_string(max_tokens) + " out of range [2,64]");
}

Tensor ScoredSequence::total_logprob() const { return span_logprob({1, positions() + 1}); }

Tensor ScoredSequence::span_logprob(std::pair<int, int> span) const {
  // span indices count full-sequence positions (BOS at 0); logprobs[i] belongs
  // to the token at position i+1
  Tensor acc = Tensor::scalar(0.0);
  for (int pos = span.first; pos < span.second; ++pos) {
    const int i = pos - 1;
    if (i < 0 || i >= positions()) throw SequenceError("span_logprob: span outside sequence");
    acc = diff::add(acc, logprobs[static_cast<size_t>(i)]);
  }
  return acc;
}

std::vector<double> ScoredSequence::logprob_values() const {
  std::vector<double> out;
  out.reserve(logprobs.size());
  for (const auto& t : logprobs) out.push_back(t.value());
  return out;
}

std::vector<std::vector<double>> ScoredSequence::dist_values() const {
  std::vector<std::vector<double>> out;
  out.reserve(dist_rows.size());
  for (const auto& t : dist_rows) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

namespace {

Tensor init_matrix(int rows, int cols, Rng& rng, bool zero = false) {
  std::vector<double> data(static_cast<size_t>(rows) * cols, 0.0);
  if (!zero) {
    const double s = 1.0 / std::sqrt(static_cast<double>(rows));
    for (auto& v : data) v = (rng.uniform() * 2.0 - 1.0) * s;
  }
  return Tensor::from({rows, cols}, std::move(data), true);
}

}  // namespace

TokenPolicy::TokenPolicy(const Vocabulary& vocab, const ObsDims& dims, const PolicyConfig& cfg,
                         std::uint64_t init_seed)
    : vocab_(vocab), dims_(dims), cfg_(cfg) {
  cfg_.validate();
  const int V = vocab_.size();
  const int flat = dims_.flat_size();
  if (flat <= 0) throw SpecError("policy: observation dims are empty");
  Rng rng(derive_seed(init_seed, {0x706F6C}));
  W_obs_ = init_matrix(flat, cfg_.backbone_hidden, rng);
  b_obs_ = init_matrix(1, cfg_.backbone_hidden, rng, true);
  E_ctx_ = init_matrix(V, cfg_.ctx_embed, rng);
  W_fu_ = init_matrix(cfg_.backbone_hidden, cfg_.feature_dim, rng);
  W_fc_ = init_matrix(cfg_.ctx_embed, cfg_.feature_dim, rng);
  b_f_ = init_matrix(1, cfg_.feature_dim, rng, true);
  E_tok_ = init_matrix(V, cfg_.tok_embed, rng);
  W_h0_ = init_matrix(cfg_.feature_dim, cfg_.head_hidden, rng);
  b_h0_ = init_matrix(1, cfg_.head_hidden, rng, true);
  W_x_ = init_matrix(cfg_.tok_embed, cfg_.head_hidden, rng);
  U_h_ = init_matrix(cfg_.head_hidden, cfg_.head_hidden, rng);
  b_h_ = init_matrix(1, cfg_.head_hidden, rng, true);
  W_o_ = init_matrix(cfg_.head_hidden, V, rng, /*zero=*/true);
  b_o_ = init_matrix(1, V, rng, /*zero=*/true);
  W_v1_ = init_matrix(cfg_.feature_dim, cfg_.value_hidden, rng);
  b_v1_ = init_matrix(1, cfg_.value_hidden, rng, true);
  W_v2_ = init_matrix(cfg_.value_hidden, 1, rng, /*zero=*/true);
  b_v2_ = init_matrix(1, 1, rng, /*zero=*/true);
}

Tensor TokenPolicy::embed_row(const Tensor& table, int id) const {
  const int V = table.rows();
  std::vector<double> onehot(static_cast<size_t>(V), 0.0);
  if (id < 0 || id >= V) throw VocabError("embed: token id out of range");
  onehot[static_cast<size_t>(id)] = 1.0;
  return diff::matmul(Tensor::from({1, V}, std::move(onehot)), table);
}

Tensor TokenPolicy::encode_state(const Observation& obs) const {
  if (!(obs.dims == dims_)) throw ObservationError("policy: observation dims mismatch");
  auto flat = Tensor::from({1, dims_.flat_size()}, obs.frames_flat());
  auto u = diff::tanh(diff::add(diff::matmul(flat, W_obs_), b_obs_));
  // mean context embedding via an averaged one-hot row
  std::vector<double> avg(static_cast<size_t>(vocab_.size()), 0.0);
  if (!obs.context_tokens.empty()) {
    const double w = 1.0 / static_cast<double>(obs.context_tokens.size());
    for (int t : obs.context_tokens) {
      if (t < 0 || t >= vocab_.size()) throw VocabError("context token id out of range");
      avg[static_cast<size_t>(t)] += w;
    }
  }
  auto ctx = diff::matmul(Tensor::from({1, vocab_.size()}, std::move(avg)), E_ctx_);
  auto pre = diff::add(diff::add(diff::matmul(u, W_fu_), diff::matmul(ctx, W_fc_)), b_f_);
  return diff::tanh(pre);
}

Tensor TokenPolicy::step_hidden(const Tensor& h, int token_id) const {
  auto x = embed_row(E_tok_, token_id);
  return diff::tanh(diff::add(diff::add(diff::matmul(x, W_x_), diff::matmul(h, U_h_)), b_h_));
}

Tensor TokenPolicy::logits_from_hidden(const Tensor& h, bool sep_seen) const {
  auto logits = diff::add(diff::matmul(h, W_o_), b_o_);
  if (sep_seen) {
    // only one separator per sequence: force p(sep) to zero downstream
    std::vector<double> mask(static_cast<size_t>(vocab_.size()), 0.0);
    mask[Vocabulary::kSep] = -1e9;
    logits = diff::add(logits, Tensor::from({1, vocab_.size()}, std::move(mask)));
  }
  return logits;
}

Tensor TokenPolicy::token_step(const Tensor& features, std::span<const int> prefix) const {
  check_tokens(prefix);
  auto h = diff::tanh(diff::add(diff::matmul(features, W_h0_), b_h0_));
  bool sep_seen = false;
  for (int t : prefix) {
    h = step_hidden(h, t);
    sep_seen = sep_seen || t == Vocabulary::kSep;
  }
  return logits_from_hidden(h, sep_seen);
}

void TokenPolicy::check_tokens(std::span<const int> tokens) const {
  if (tokens.empty() || tokens[0] != Vocabulary::kBos)
    throw SequenceError("token sequence must start with <bos>");
  if (static_cast<int>(tokens.size()) - 1 > cfg_.max_tokens)
    throw SequenceError("token sequence longer than max_tokens");
  for (int t : tokens)
    if (t < 0 || t >= vocab_.size()) throw VocabError("token id out of vocabulary range");
}

ActionEmission TokenPolicy::sample_action(const Observation& obs, Rng& rng, bool greedy) const {
  diff::NoGradGuard ng;
  auto features = encode_state(obs);
  auto h = diff::tanh(diff::add(diff::matmul(features, W_h0_), b_h0_));

  ActionEmission e;
  e.tokens.push_back(Vocabulary::kBos);
  bool sep_seen = false;
  for (int step = 0; step < cfg_.max_tokens; ++step) {
    h = step_hidden(h, e.tokens.back());
    auto probs = diff::softmax_rows(logits_from_hidden(h, sep_seen));
    int pick;
    if (greedy) {
      pick = 0;
      auto d = probs.data();
      for (int j = 1; j < vocab_.size(); ++j)
        if (d[static_cast<size_t>(j)] > d[static_cast<size_t>(pick)]) pick = j;
    } else {
      pick = rng.categorical(probs.data());
    }
    e.logprobs.push_back(std::log(std::max(probs.data()[static_cast<size_t>(pick)], diff::kLogFloor)));
    e.tokens.push_back(pick);
    if (pick == Vocabulary::kSep && !sep_seen) {
      sep_seen = true;
      e.sep_pos = static_cast<int>(e.tokens.size()) - 1;
    }
    if (pick == Vocabulary::kEos) return e;
  }
  e.truncated = true;
  return e;
}

ScoredSequence TokenPolicy::score_sequence(const Observation& obs, std::span<const int> tokens) const {
  check_tokens(tokens);
  if (tokens.size() < 2) throw SequenceError("nothing to score: sequence has no generated tokens");
  auto features = encode_state(obs);
  auto h = diff::tanh(diff::add(diff::matmul(features, W_h0_), b_h0_));

  ScoredSequence out;
  out.vocab_size = vocab_.size();
  bool sep_seen = false;
  for (size_t i = 0; i + 1 < tokens.size(); ++i) {
    h = step_hidden(h, tokens[i]);
    auto probs = diff::softmax_rows(logits_from_hidden(h, sep_seen));
    out.dist_rows.push_back(probs);
    out.logprobs.push_back(diff::log(diff::gather_index(probs, {tokens[i + 1]})));
    if (tokens[i + 1] == Vocabulary::kSep) sep_seen = true;
  }

  auto vin = cfg_.stop_grad_value ? diff::stop_grad(features) : features;
  auto vh = diff::tanh(diff::add(diff::matmul(vin, W_v1_), b_v1_));
  out.value = diff::sum(diff::add(diff::matmul(vh, W_v2_), b_v2_));
  return out;
}

Tensor TokenPolicy::value(const Observation& obs) const {
  auto features = encode_state(obs);
  auto vin = cfg_.stop_grad_value ? diff::stop_grad(features) : features;
  auto vh = diff::tanh(diff::add(diff::matmul(vin, W_v1_), b_v1_));
  return diff::sum(diff::add(diff::matmul(vh, W_v2_), b_v2_));
}

double TokenPolicy::value_detached(const Observation& obs) const {
  diff::NoGradGuard ng;
  return value(obs).value();
}

TokenPolicy TokenPolicy::snapshot() const {
  TokenPolicy copy;
  copy.vocab_ = vocab_;
  copy.dims_ = dims_;
  copy.cfg_ = cfg_;
  auto clone = [](const Tensor& t) {
    return Tensor::from(t.shape(), std::vector<double>(t.data().begin(), t.data().end()),
                        t.requires_grad());
  };
  copy.W_obs_ = clone(W_obs_);
  copy.b_obs_ = clone(b_obs_);
  copy.E_ctx_ = clone(E_ctx_);
  copy.W_fu_ = clone(W_fu_);
  copy.W_fc_ = clone(W_fc_);
  copy.b_f_ = clone(b_f_);
  copy.E_tok_ = clone(E_tok_);
  copy.W_h0_ = clone(W_h0_);
  copy.b_h0_ = clone(b_h0_);
  copy.W_x_ = clone(W_x_);
  copy.U_h_ = clone(U_h_);
  copy.b_h_ = clone(b_h_);
  copy.W_o_ = clone(W_o_);
  copy.b_o_ = clone(b_o_);
  copy.W_v1_ = clone(W_v1_);
  copy.b_v1_ = clone(b_v1_);
  copy.W_v2_ = clone(W_v2_);
  copy.b_v2_ = clone(b_v2_);
  return copy;
}

train::NamedParams TokenPolicy::policy_params() {
  return {{"pi.W_obs", W_obs_}, {"pi.b_obs", b_obs_}, {"pi.E_ctx", E_ctx_}, {"pi.W_fu", W_fu_},
          {"pi.W_fc", W_fc_},   {"pi.b_f", b_f_},     {"pi.E_tok", E_tok_}, {"pi.W_h0", W_h0_},
          {"pi.b_h0", b_h0_},   {"pi.W_x", W_x_},     {"pi.U_h", U_h_},     {"pi.b_h", b_h_},
          {"pi.W_o", W_o_},     {"pi.b_o", b_o_}};
}

train::NamedParams TokenPolicy::value_params() {
  return {{"v.W_v1", W_v1_}, {"v.b_v1", b_v1_}, {"v.W_v2", W_v2_}, {"v.b_v2", b_v2_}};
}

train::NamedParams TokenPolicy::all_params() {
  auto p = policy_params();
  auto v = value_params();
  p.insert(p.end(), v.begin(), v.end());
  return p;
}

void TokenPolicy::save_params(std::ostream& os) const {
  auto params = const_cast<TokenPolicy*>(this)->all_params();
  ser::write_u64(os, params.size());
  for (auto& [name, t] : params) {
    ser::write_string(os, name);
    ser::write_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) ser::write_u32(os, static_cast<std::uint32_t>(d));
    ser::write_vec_f64(os, std::vector<double>(t.data().begin(), t.data().end()));
  }
}

void TokenPolicy::load_params(std::istream& is) {
  auto params = all_params();
  const auto n = ser::read_u64(is);
  if (n != params.size()) throw CheckpointError("parameter count mismatch in checkpoint");
  for (auto& [name, t] : params) {
    const std::string got = ser::read_string(is);
    if (got != name) throw CheckpointError("parameter order mismatch: " + got + " vs " + name);
    const auto rank = ser::read_u32(is);
    diff::Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(ser::read_u32(is));
    if (shape != t.shape()) throw CheckpointError("parameter shape mismatch for " + name);
    auto data = ser::read_vec_f64(is);
    if (data.size() != t.data().size()) throw CheckpointError("parameter size mismatch for " + name);
    std::copy(data.begin(), data.end(), t.raw_data().begin());
  }
}

}  // namespace vldac::policy
