#include <doctest.h>

#include <algorithm>
#include <sstream>
#include <vector>

#include "vldac/envs/action.hpp"
#include "vldac/envs/env.hpp"
#include "vldac/policy/policy.hpp"
#include "vldac/rng.hpp"
#include "vldac/train/format.hpp"

using namespace vldac;
using namespace vldac::train;

namespace {

policy::PolicyConfig tiny_policy() {
  policy::PolicyConfig cfg;
  cfg.feature_dim = 16;
  cfg.backbone_hidden = 12;
  cfg.ctx_embed = 4;
  cfg.tok_embed = 8;
  cfg.head_hidden = 12;
  cfg.value_hidden = 8;
  cfg.max_tokens = 6;
  return cfg;
}

ActionEmission to_emission(const std::vector<int>& tokens) {
  ActionEmission e;
  e.tokens = tokens;
  auto sep = std::find(tokens.begin(), tokens.end(), Vocabulary::kSep);
  e.sep_pos = sep == tokens.end() ? -1 : static_cast<int>(sep - tokens.begin());
  e.logprobs.assign(tokens.size() - 1, 0.0);
  return e;
}

double sampled_parse_rate(const policy::TokenPolicy& pol, const Observation& obs, EnvKind kind,
                          int n, Rng& rng) {
  int ok = 0;
  for (int i = 0; i < n; ++i) {
    const auto em = pol.sample_action(obs, rng);
    if (!std::holds_alternative<ParseFailure>(parse_action(em, pol.vocab(), kind))) ++ok;
  }
  return static_cast<double>(ok) / n;
}

std::string params_bytes(policy::TokenPolicy& pol) {
  std::ostringstream os;
  pol.save_params(os);
  return os.str();
}

}  // namespace

TEST_CASE("random emissions are grammar-valid for every env kind") {
  for (EnvKind kind : {EnvKind::hallway_nav, EnvKind::rooms_nav, EnvKind::card_points,
                       EnvKind::tiny_shop}) {
    const Vocabulary vocab = Vocabulary::for_kind(kind);
    Rng rng(derive_seed(7, {static_cast<std::uint64_t>(kind)}));
    for (int i = 0; i < 200; ++i) {
      const auto tokens = random_valid_emission(vocab, kind, 8, rng);
      REQUIRE(tokens.size() <= 8);
      CHECK(tokens.front() == Vocabulary::kBos);
      CHECK(tokens.back() == Vocabulary::kEos);
      CHECK(std::count(tokens.begin(), tokens.end(), Vocabulary::kSep) == 1);
      const auto parsed = parse_action(to_emission(tokens), vocab, kind);
      CHECK_FALSE(std::holds_alternative<ParseFailure>(parsed));
    }
  }
}

TEST_CASE("random emissions cover the command set") {
  // Uniform sampling over tokens must not favour any single command.
  const Vocabulary vocab = Vocabulary::for_kind(EnvKind::hallway_nav);
  Rng rng(11);
  std::vector<int> counts(static_cast<size_t>(vocab.size()), 0);
  for (int i = 0; i < 500; ++i) {
    const auto tokens = random_valid_emission(vocab, EnvKind::hallway_nav, 8, rng);
    const auto em = to_emission(tokens);
    for (size_t i = static_cast<size_t>(em.sep_pos) + 1; i + 1 < tokens.size(); ++i)
      ++counts[static_cast<size_t>(tokens[i])];
  }
  for (const char* name : {"turn_left", "turn_right", "forward"})
    CHECK(counts[static_cast<size_t>(vocab.id(name))] > 50);
}

TEST_CASE("format pretraining lifts parse rate, leaves value head untouched") {
  const EnvSpec spec = EnvSpec::make(EnvKind::hallway_nav);
  const Vocabulary vocab = Vocabulary::for_kind(spec.kind);
  policy::TokenPolicy pol(vocab, spec.obs_dims(), tiny_policy(), 21);
  auto env = make_env(spec);
  const Observation obs = env->reset(99);

  std::vector<std::vector<double>> value_before;
  for (auto& [name, t] : pol.value_params())
    value_before.emplace_back(t.raw_data().begin(), t.raw_data().end());
  const std::string pi_before = params_bytes(pol);

  Rng probe(5);
  const double before = sampled_parse_rate(pol, obs, spec.kind, 200, probe);

  format_pretrain(pol, spec, 200, 5e-3, 16, 31);

  Rng probe2(5);
  const double after = sampled_parse_rate(pol, obs, spec.kind, 200, probe2);
  CHECK(after >= 0.8);
  CHECK(after > before);
  CHECK(params_bytes(pol) != pi_before);

  size_t i = 0;
  for (auto& [name, t] : pol.value_params()) {
    const auto& now = t.raw_data();
    REQUIRE(now.size() == value_before[i].size());
    for (size_t j = 0; j < now.size(); ++j) CHECK(now[j] == value_before[i][j]);
    ++i;
  }
}

TEST_CASE("format pretraining is deterministic in its seed") {
  const EnvSpec spec = EnvSpec::make(EnvKind::rooms_nav);
  const Vocabulary vocab = Vocabulary::for_kind(spec.kind);

  policy::TokenPolicy a(vocab, spec.obs_dims(), tiny_policy(), 4);
  policy::TokenPolicy b(vocab, spec.obs_dims(), tiny_policy(), 4);
  policy::TokenPolicy c(vocab, spec.obs_dims(), tiny_policy(), 4);
  format_pretrain(a, spec, 20, 5e-3, 8, 17);
  format_pretrain(b, spec, 20, 5e-3, 8, 17);
  format_pretrain(c, spec, 20, 5e-3, 8, 18);

  CHECK(params_bytes(a) == params_bytes(b));
  CHECK(params_bytes(a) != params_bytes(c));
}

TEST_CASE("zero steps is a no-op") {
  const EnvSpec spec = EnvSpec::make(EnvKind::hallway_nav);
  const Vocabulary vocab = Vocabulary::for_kind(spec.kind);
  policy::TokenPolicy pol(vocab, spec.obs_dims(), tiny_policy(), 3);
  const std::string before = params_bytes(pol);
  format_pretrain(pol, spec, 0, 5e-3, 8, 17);
  CHECK(params_bytes(pol) == before);
}
