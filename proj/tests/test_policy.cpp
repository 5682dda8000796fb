#include <doctest.h>

#include <cmath>
#include <sstream>

#include "vldac/diff/gradcheck.hpp"
#include "vldac/envs/env.hpp"
#include "vldac/policy/policy.hpp"

using namespace vldac;
using namespace vldac::policy;
using diff::Tensor;

namespace {

PolicyConfig tiny_cfg() {
  PolicyConfig cfg;
  cfg.feature_dim = 12;
  cfg.backbone_hidden = 8;
  cfg.ctx_embed = 4;
  cfg.tok_embed = 6;
  cfg.head_hidden = 10;
  cfg.value_hidden = 8;
  cfg.max_tokens = 6;
  return cfg;
}

struct Fixture {
  std::unique_ptr<Env> env = make_env(EnvSpec::make(EnvKind::hallway_nav));
  Observation obs;
  Fixture() { obs = env->reset(11); }
  TokenPolicy make(std::uint64_t seed = 1, PolicyConfig cfg = tiny_cfg()) const {
    return TokenPolicy(env->vocab(), env->spec().obs_dims(), cfg, seed);
  }
};

}  // namespace

TEST_CASE("policy: fresh head is exactly uniform with zero value") {
  Fixture f;
  auto pol = f.make();
  auto feat = pol.encode_state(f.obs);
  CHECK(feat.shape() == diff::Shape{1, 12});
  for (double v : feat.data()) CHECK(std::fabs(v) <= 1.0);

  std::vector<int> prefix = {Vocabulary::kBos};
  auto logits = pol.token_step(feat, prefix);
  for (double v : logits.data()) CHECK(v == 0.0);
  auto probs = diff::softmax_rows(logits);
  for (double p : probs.data()) CHECK(p == doctest::Approx(1.0 / 8.0).epsilon(1e-15));

  CHECK(pol.value_detached(f.obs) == 0.0);
}

TEST_CASE("policy: init is seed-deterministic") {
  Fixture f;
  auto a = f.make(7);
  auto b = f.make(7);
  auto c = f.make(8);
  auto pa = a.policy_params();
  auto pb = b.policy_params();
  auto pc = c.policy_params();
  bool all_equal = true, any_diff_c = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    auto da = pa[i].second.data();
    auto db = pb[i].second.data();
    auto dc = pc[i].second.data();
    for (size_t j = 0; j < da.size(); ++j) {
      all_equal = all_equal && da[j] == db[j];
      any_diff_c = any_diff_c || da[j] != dc[j];
    }
  }
  CHECK(all_equal);
  CHECK(any_diff_c);
}

TEST_CASE("policy: sampling and scoring agree bit-for-bit") {
  Fixture f;
  auto pol = f.make(3);
  // perturb the output layer so distributions are non-uniform
  auto params = pol.policy_params();
  Rng noise(99);
  for (auto& [name, t] : params)
    if (name == "pi.W_o" || name == "pi.b_o")
      for (auto& v : t.raw_data()) v = noise.uniform() * 2 - 1;

  Rng rng(1234);
  for (int trial = 0; trial < 50; ++trial) {
    auto e = pol.sample_action(f.obs, rng);
    REQUIRE(e.tokens.size() >= 2);
    CHECK(e.tokens[0] == Vocabulary::kBos);
    CHECK(e.logprobs.size() == e.tokens.size() - 1);
    CHECK(static_cast<int>(e.tokens.size()) - 1 <= pol.config().max_tokens);
    if (!e.truncated) CHECK(e.tokens.back() == Vocabulary::kEos);

    auto scored = pol.score_sequence(f.obs, e.tokens);
    auto lp = scored.logprob_values();
    REQUIRE(lp.size() == e.logprobs.size());
    for (size_t i = 0; i < lp.size(); ++i) CHECK(lp[i] == e.logprobs[i]);

    // per-position distributions equal an independent token_step call
    auto feat = pol.encode_state(f.obs);
    for (size_t i = 0; i + 1 < e.tokens.size(); ++i) {
      std::span<const int> prefix(e.tokens.data(), i + 1);
      auto probs = diff::softmax_rows(pol.token_step(feat, prefix));
      auto row = scored.dist_rows[i].data();
      for (int j = 0; j < 8; ++j) CHECK(row[static_cast<size_t>(j)] == probs.data()[static_cast<size_t>(j)]);
    }

    // factorized total equals the sum of per-position logprobs
    double manual = 0;
    for (double v : lp) manual += v;
    CHECK(scored.total_logprob().value() == doctest::Approx(manual).epsilon(1e-12));

    // sep appears at most once and matches sep_pos
    int seps = 0;
    for (size_t i = 1; i < e.tokens.size(); ++i)
      if (e.tokens[i] == Vocabulary::kSep) ++seps;
    CHECK(seps <= 1);
    if (seps == 1) CHECK(e.tokens[static_cast<size_t>(e.sep_pos)] == Vocabulary::kSep);
    else CHECK(e.sep_pos == -1);
  }
}

TEST_CASE("policy: separator probability is zero once emitted") {
  Fixture f;
  auto pol = f.make(5);
  auto feat = pol.encode_state(f.obs);
  std::vector<int> prefix = {Vocabulary::kBos, Vocabulary::kSep, 6};
  auto probs = diff::softmax_rows(pol.token_step(feat, prefix));
  CHECK(probs.data()[Vocabulary::kSep] == 0.0);
  double s = 0;
  for (double p : probs.data()) s += p;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("policy: thought/action span logprobs sum to the total") {
  Fixture f;
  auto pol = f.make(3);
  // [BOS] goal goal [SEP] forward [EOS]
  const auto& v = pol.vocab();
  std::vector<int> toks = {Vocabulary::kBos, v.id("goal"), v.id("goal"), Vocabulary::kSep,
                           v.id("forward"), Vocabulary::kEos};
  ActionEmission e;
  e.tokens = toks;
  e.sep_pos = 3;
  auto scored = pol.score_sequence(f.obs, toks);
  const double thought = scored.span_logprob(e.thought_span()).value();
  const double action = scored.span_logprob(e.action_span()).value();
  const double total = scored.total_logprob().value();
  // total = thought + sep token + action + eos token
  auto lp = scored.logprob_values();
  const double sep_lp = lp[2];   // position 3 token
  const double eos_lp = lp[4];   // position 5 token
  CHECK(thought + sep_lp + action + eos_lp == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("policy: first-token sampling frequencies match the distribution") {
  Fixture f;
  auto cfg = tiny_cfg();
  cfg.max_tokens = 2;
  auto pol = f.make(17, cfg);
  auto params = pol.policy_params();
  Rng noise(4242);
  for (auto& [name, t] : params)
    if (name == "pi.b_o")
      for (auto& v : t.raw_data()) v = noise.uniform() * 2 - 1;

  auto feat = pol.encode_state(f.obs);
  std::vector<int> prefix = {Vocabulary::kBos};
  auto probs = diff::softmax_rows(pol.token_step(feat, prefix));

  const int N = 20000;
  std::vector<int> counts(8, 0);
  Rng rng(7);
  for (int i = 0; i < N; ++i) {
    auto e = pol.sample_action(f.obs, rng);
    counts[static_cast<size_t>(e.tokens[1])]++;
  }
  for (int j = 0; j < 8; ++j) {
    const double p = probs.data()[static_cast<size_t>(j)];
    const double freq = static_cast<double>(counts[static_cast<size_t>(j)]) / N;
    const double sigma = std::sqrt(p * (1 - p) / N);
    CHECK(std::fabs(freq - p) <= std::max(3.5 * sigma, 1e-3));
  }
}

TEST_CASE("policy: value head stop-gradient isolates the backbone") {
  Fixture f;
  auto cfg = tiny_cfg();
  cfg.stop_grad_value = true;
  auto pol = f.make(21, cfg);
  // give the zero-init value output layer some weight so grads can flow
  for (auto& [name, t] : pol.value_params())
    if (name == "v.W_v2")
      for (auto& v : t.raw_data()) v = 0.3;

  auto v = pol.value(f.obs);
  diff::backward(v);
  for (auto& [name, t] : pol.policy_params()) CHECK_FALSE(t.has_grad());
  bool value_grads = false;
  for (auto& [name, t] : pol.value_params())
    if (t.has_grad())
      for (double g : t.grad()) value_grads = value_grads || g != 0.0;
  CHECK(value_grads);

  auto cfg2 = tiny_cfg();
  cfg2.stop_grad_value = false;
  auto pol2 = f.make(21, cfg2);
  for (auto& [name, t] : pol2.value_params())
    if (name == "v.W_v2")
      for (auto& v2 : t.raw_data()) v2 = 0.3;
  // forward value identical whether or not gradients are blocked
  CHECK(pol2.value_detached(f.obs) == pol.value_detached(f.obs));
  auto v2 = pol2.value(f.obs);
  diff::backward(v2);
  bool backbone_grads = false;
  for (auto& [name, t] : pol2.policy_params())
    if (t.has_grad())
      for (double g : t.grad()) backbone_grads = backbone_grads || g != 0.0;
  CHECK(backbone_grads);
}

TEST_CASE("policy: malformed scoring inputs throw") {
  Fixture f;
  auto pol = f.make();
  std::vector<int> noBos = {6, Vocabulary::kEos};
  CHECK_THROWS_AS(pol.score_sequence(f.obs, noBos), SequenceError);
  std::vector<int> tooLong(static_cast<size_t>(pol.config().max_tokens) + 2, 4);
  tooLong[0] = Vocabulary::kBos;
  CHECK_THROWS_AS(pol.score_sequence(f.obs, tooLong), SequenceError);
  std::vector<int> badId = {Vocabulary::kBos, 99};
  CHECK_THROWS_AS(pol.score_sequence(f.obs, badId), VocabError);
  std::vector<int> onlyBos = {Vocabulary::kBos};
  CHECK_THROWS_AS(pol.score_sequence(f.obs, onlyBos), SequenceError);

  auto cardObs = make_env(EnvSpec::make(EnvKind::card_points))->reset(1);
  CHECK_THROWS_AS(pol.encode_state(cardObs), ObservationError);
}

TEST_CASE("policy: snapshot is a deep copy") {
  Fixture f;
  auto pol = f.make(9);
  const auto& v = pol.vocab();
  std::vector<int> toks = {Vocabulary::kBos, Vocabulary::kSep, v.id("forward"), Vocabulary::kEos};
  auto before = pol.score_sequence(f.obs, toks).logprob_values();

  auto snap = pol.snapshot();
  // ratio between snapshot and live is exactly 1 before any update
  auto snap_lp = snap.score_sequence(f.obs, toks).logprob_values();
  for (size_t i = 0; i < before.size(); ++i) CHECK(snap_lp[i] == before[i]);

  Rng noise(77);
  for (auto& [name, t] : pol.policy_params())
    for (auto& x : t.raw_data()) x += noise.uniform() * 0.1;
  auto after_live = pol.score_sequence(f.obs, toks).logprob_values();
  auto after_snap = snap.score_sequence(f.obs, toks).logprob_values();
  bool live_moved = false;
  for (size_t i = 0; i < before.size(); ++i) {
    live_moved = live_moved || after_live[i] != before[i];
    CHECK(after_snap[i] == before[i]);
  }
  CHECK(live_moved);
}

TEST_CASE("policy: parameter save/load round-trips bit-exactly") {
  Fixture f;
  auto pol = f.make(13);
  auto params = pol.policy_params();
  Rng noise(5);
  for (auto& [name, t] : params)
    for (auto& v : t.raw_data()) v += noise.uniform() * 0.1;

  std::stringstream buf;
  pol.save_params(buf);
  auto pol2 = f.make(14);  // different init; must be overwritten completely
  pol2.load_params(buf);
  auto a = pol.all_params();
  auto b = pol2.all_params();
  for (size_t i = 0; i < a.size(); ++i) {
    auto da = a[i].second.data();
    auto db = b[i].second.data();
    REQUIRE(da.size() == db.size());
    for (size_t j = 0; j < da.size(); ++j) CHECK(da[j] == db[j]);
  }

  std::stringstream garbage("not a checkpoint");
  CHECK_THROWS_AS(pol2.load_params(garbage), CheckpointError);
}

TEST_CASE("policy: different contexts change the encoding") {
  auto env = make_env(EnvSpec::make(EnvKind::tiny_shop));
  auto obs1 = env->reset(1);
  PolicyConfig cfg = tiny_cfg();
  TokenPolicy pol(env->vocab(), env->spec().obs_dims(), cfg, 2);
  Observation obs2 = obs1;
  obs2.context_tokens[0] = obs2.context_tokens[0] == env->vocab().id("red")
                               ? env->vocab().id("green")
                               : env->vocab().id("red");
  auto f1 = pol.encode_state(obs1);
  auto f2 = pol.encode_state(obs2);
  bool differs = false;
  for (int i = 0; i < f1.numel(); ++i) differs = differs || f1.at(i) != f2.at(i);
  CHECK(differs);
}

TEST_CASE("policy: end-to-end gradient check through score graph") {
  Fixture f;
  // gradients must flow through the full graph here, so disable the value stop-grad
  auto cfg = tiny_cfg();
  cfg.stop_grad_value = false;
  auto pol = f.make(31, cfg);
  auto params = pol.policy_params();
  Rng noise(6);
  for (auto& [name, t] : params)
    if (name == "pi.W_o" || name == "pi.b_o")
      for (auto& v : t.raw_data()) v = (noise.uniform() * 2 - 1) * 0.4;
  for (auto& [name, t] : pol.value_params())
    for (auto& v : t.raw_data()) v = (noise.uniform() * 2 - 1) * 0.4;

  const auto& v = pol.vocab();
  std::vector<int> toks = {Vocabulary::kBos, v.id("goal"), Vocabulary::kSep, v.id("forward"),
                           Vocabulary::kEos};
  auto loss_fn = [&]() {
    auto scored = pol.score_sequence(f.obs, toks);
    auto pg = diff::neg(scored.total_logprob());
    auto vl = diff::mul(scored.value, scored.value);
    return diff::add(pg, vl);
  };
  std::vector<std::pair<std::string, Tensor>> checked;
  for (auto& [name, t] : pol.all_params())
    if (name == "pi.W_fu" || name == "pi.U_h" || name == "pi.W_o" || name == "pi.E_tok" ||
        name == "v.W_v1" || name == "pi.E_ctx")
      checked.emplace_back(name, t);
  auto report = diff::finite_diff_check(loss_fn, checked, 1e-5, 1e-4);
  INFO("max rel err ", report.max_rel_err);
  CHECK(report.passed);
}
