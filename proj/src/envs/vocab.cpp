#include "vldac/envs/vocab.hpp"

#include <unordered_set>

namespace vldac {

const char* env_kind_name(EnvKind k) {
  switch (k) {
    case EnvKind::hallway_nav: return "hallway_nav";
    case EnvKind::rooms_nav: return "rooms_nav";
    case EnvKind::card_points: return "card_points";
    case EnvKind::tiny_shop: return "tiny_shop";
  }
  return "?";
}

EnvKind env_kind_from_name(const std::string& name) {
  if (name == "hallway_nav") return EnvKind::hallway_nav;
  if (name == "rooms_nav") return EnvKind::rooms_nav;
  if (name == "card_points") return EnvKind::card_points;
  if (name == "tiny_shop") return EnvKind::tiny_shop;
  throw SpecError("unknown env kind '" + name + "'");
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 5) throw VocabError("vocabulary needs the 4 specials plus content tokens");
  if (tokens_[kPad] != "<pad>" || tokens_[kBos] != "<bos>" || tokens_[kEos] != "<eos>" ||
      tokens_[kSep] != "<sep>")
    throw VocabError("specials must be <pad>,<bos>,<eos>,<sep> at ids 0..3");
  std::unordered_set<std::string> seen;
  for (const auto& t : tokens_) {
    if (t.empty()) throw VocabError("empty token string");
    if (!seen.insert(t).second) throw VocabError("duplicate token '" + t + "'");
  }
}

Vocabulary Vocabulary::for_kind(EnvKind kind) {
  std::vector<std::string> t = {"<pad>", "<bos>", "<eos>", "<sep>"};
  switch (kind) {
    case EnvKind::hallway_nav:
    case EnvKind::rooms_nav:
      for (const char* s : {"turn_left", "turn_right", "forward", "goal"}) t.emplace_back(s);
      break;
    case EnvKind::card_points:
      for (const char* s : {"1", "2", "3", "4", "5", "6", "7", "8", "9", "plus", "mul", "pick",
                            "submit", "target"})
        t.emplace_back(s);
      break;
    case EnvKind::tiny_shop:
      for (const char* s : {"search", "click", "buy", "red", "green", "blue", "hat", "mug", "pen",
                            "big", "small", "mid", "item1", "item2", "item3", "item4", "item5",
                            "item6"})
        t.emplace_back(s);
      break;
  }
  return Vocabulary(std::move(t));
}

int Vocabulary::id(const std::string& token) const {
  for (size_t i = 0; i < tokens_.size(); ++i)
    if (tokens_[i] == token) return static_cast<int>(i);
  throw VocabError("token '" + token + "' not in vocabulary");
}

const std::string& Vocabulary::name(int id) const {
  if (id < 0 || id >= size()) throw VocabError("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const {
  for (const auto& t : tokens_)
    if (t == token) return true;
  return false;
}

}  // namespace vldac
