#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "vldac/envs/vocab.hpp"

namespace vldac {

// One sampled token sequence: tokens[0] is always BOS; everything after it was
// generated. logprobs align with the generated positions (size tokens.size()-1).
struct ActionEmission {
  std::vector<int> tokens;
  std::vector<double> logprobs;
  int sep_pos = -1;        // index into tokens, -1 when no separator was emitted
  bool truncated = false;  // hit the length cap before EOS

  // Generated-index half-open spans. Thought: after BOS up to (not including)
  // SEP. Action: after SEP up to EOS/end. Empty spans are (x, x).
  std::pair<int, int> thought_span() const;
  std::pair<int, int> action_span() const;
};

enum class NavCommand { turn_left, turn_right, forward };
enum class CardCommand { pick, plus, mul, submit };
enum class ShopCommand { search, click, buy };

struct EnvAction {
  // exactly one of these is meaningful, according to the env kind
  NavCommand nav{};
  CardCommand card{};
  ShopCommand shop{};
  int arg = -1;  // pick index (0-based), search word token id, click item (0-based)
};

struct ParseFailure {
  std::string reason;
};

using ParsedAction = std::variant<EnvAction, ParseFailure>;

inline bool parse_ok(const ParsedAction& a) { return std::holds_alternative<EnvAction>(a); }

// Grammar check of the action span against one env family's command language.
// Never throws for malformed content; malformed means ParseFailure with a
// reason. Throws VocabError only for token ids outside the vocabulary.
ParsedAction parse_action(const ActionEmission& emission, const Vocabulary& vocab, EnvKind kind);

}  // namespace vldac
