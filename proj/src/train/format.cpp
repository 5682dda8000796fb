#include "vldac/train/format.hpp"

#include "vldac/diff/tensor.hpp"
#include "vldac/envs/action.hpp"
#include "vldac/train/optim.hpp"

namespace vldac::train {

namespace {

constexpr std::uint64_t kTagFmtObs = 0x666D741;  // observation pool stream
constexpr std::uint64_t kTagFmtSeq = 0x666D742;  // sequence sampling stream

}  // namespace

std::vector<int> random_valid_emission(const Vocabulary& vocab, EnvKind kind, int max_tokens,
                                       Rng& rng) {
  const int word_base = Vocabulary::kSep + 1;  // first non-special token id
  const int words = vocab.size() - word_base;
  if (words < 1) throw VocabError("vocabulary has no command tokens");
  for (int attempt = 0; attempt < 10'000; ++attempt) {
    std::vector<int> tokens{Vocabulary::kBos};
    const int thought = rng.uniform_int(3);                       // 0..2 warm-up words
    const int action = 1 + rng.uniform_int(std::min(3, words));   // 1..3 command words
    if (1 + thought + 1 + action + 1 > max_tokens) continue;
    for (int i = 0; i < thought; ++i) tokens.push_back(word_base + rng.uniform_int(words));
    const int sep_pos = static_cast<int>(tokens.size());
    tokens.push_back(Vocabulary::kSep);
    for (int i = 0; i < action; ++i) tokens.push_back(word_base + rng.uniform_int(words));
    tokens.push_back(Vocabulary::kEos);

    ActionEmission em;
    em.tokens = tokens;
    em.sep_pos = sep_pos;
    if (!std::holds_alternative<ParseFailure>(parse_action(em, vocab, kind))) return tokens;
  }
  throw SpecError("could not rejection-sample a valid emission; grammar too sparse");
}

void format_pretrain(policy::TokenPolicy& pol, const EnvSpec& spec, int steps, double lr,
                     int batch, std::uint64_t seed) {
  if (steps <= 0) return;
  auto env = make_env(spec);
  std::vector<Observation> pool;
  pool.reserve(static_cast<size_t>(batch));
  for (int i = 0; i < batch; ++i)
    pool.push_back(env->reset(derive_seed(seed, {kTagFmtObs, static_cast<std::uint64_t>(i)})));

  Rng rng(derive_seed(seed, {kTagFmtSeq}));
  Adam adam;
  auto params = pol.policy_params();
  const int max_tokens = pol.config().max_tokens;
  for (int step = 0; step < steps; ++step) {
    Adam::zero_grad(params);
    diff::Tensor acc;
    for (int b = 0; b < batch; ++b) {
      const auto tokens = random_valid_emission(pol.vocab(), spec.kind, max_tokens, rng);
      const auto scored = pol.score_sequence(pool[static_cast<size_t>(b)], tokens);
      const auto item =
          diff::scale(scored.total_logprob(), -1.0 / static_cast<double>(scored.positions()));
      acc = b == 0 ? item : diff::add(acc, item);
    }
    diff::backward(diff::scale(acc, 1.0 / static_cast<double>(batch)));
    adam.step(params, lr, 1.0, 0.0);
  }
  Adam::zero_grad(params);
}

}  // namespace vldac::train
