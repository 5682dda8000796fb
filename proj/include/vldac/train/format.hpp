#pragma once

#include <cstdint>

#include "vldac/envs/env.hpp"
#include "vldac/policy/policy.hpp"

namespace vldac::train {

// Supervised formatting phase run once at initialization: fits the policy head
// by cross-entropy to grammar-valid emissions whose action commands are drawn
// uniformly at random (rejection-sampled through parse_action, so no
// task-specific structure leaks in). Stands in for starting from a pretrained
// model that already writes well-formed actions. Touches only policy ("pi.*")
// parameters; the value head is untouched. Deterministic in seed.
void format_pretrain(policy::TokenPolicy& pol, const EnvSpec& spec, int steps, double lr,
                     int batch, std::uint64_t seed);

// One rejection-sampled grammar-valid token sequence for the given env kind
// (BOS, optional thought tokens, SEP, random action span, EOS), capped to
// max_tokens. Exposed for tests.
std::vector<int> random_valid_emission(const Vocabulary& vocab, EnvKind kind, int max_tokens,
                                       Rng& rng);

}  // namespace vldac::train
