#include "vldac/envs/action.hpp"

namespace vldac {

std::pair<int, int> ActionEmission::thought_span() const {
  if (sep_pos < 0) return {1, 1};
  return {1, sep_pos};
}

std::pair<int, int> ActionEmission::action_span() const {
  const int n = static_cast<int>(tokens.size());
  if (sep_pos < 0) return {n, n};
  int end = n;
  if (!tokens.empty() && tokens.back() == Vocabulary::kEos) end = n - 1;
  return {sep_pos + 1, end};
}

namespace {

ParsedAction fail(const char* reason) { return ParseFailure{reason}; }

}  // namespace

ParsedAction parse_action(const ActionEmission& emission, const Vocabulary& vocab, EnvKind kind) {
  for (int t : emission.tokens) (void)vocab.name(t);  // id range check
  if (emission.tokens.empty() || emission.tokens[0] != Vocabulary::kBos)
    return fail("sequence does not start with <bos>");
  if (emission.sep_pos < 0) return fail("no <sep> before the action span");

  auto [beg, end] = emission.action_span();
  std::vector<int> span;
  for (int i = beg; i < end; ++i) {
    const int t = emission.tokens[static_cast<size_t>(i)];
    if (t == Vocabulary::kSep) return fail("duplicate <sep>");
    if (t == Vocabulary::kPad || t == Vocabulary::kBos) return fail("special token inside action span");
    span.push_back(t);
  }
  if (span.empty()) return fail("empty action span");

  EnvAction act;
  switch (kind) {
    case EnvKind::hallway_nav:
    case EnvKind::rooms_nav: {
      if (span.size() != 1) return fail("navigation takes exactly one command token");
      const std::string& w = vocab.name(span[0]);
      if (w == "turn_left") act.nav = NavCommand::turn_left;
      else if (w == "turn_right") act.nav = NavCommand::turn_right;
      else if (w == "forward") act.nav = NavCommand::forward;
      else return fail("not a navigation command");
      return act;
    }
    case EnvKind::card_points: {
      const std::string& w = vocab.name(span[0]);
      if (w == "pick") {
        if (span.size() != 2) return fail("pick takes one card index");
        const std::string& d = vocab.name(span[1]);
        if (d.size() != 1 || d[0] < '1' || d[0] > '9') return fail("pick index must be a digit");
        act.card = CardCommand::pick;
        act.arg = d[0] - '1';
        return act;
      }
      if (span.size() != 1) return fail("operator commands take no argument");
      if (w == "plus") act.card = CardCommand::plus;
      else if (w == "mul") act.card = CardCommand::mul;
      else if (w == "submit") act.card = CardCommand::submit;
      else return fail("not a card command");
      return act;
    }
    case EnvKind::tiny_shop: {
      const std::string& w = vocab.name(span[0]);
      if (w == "search") {
        if (span.size() != 2) return fail("search takes one attribute word");
        const std::string& a = vocab.name(span[1]);
        static const char* kWords[] = {"red", "green", "blue", "hat", "mug", "pen", "big", "small", "mid"};
        for (const char* cand : kWords) {
          if (a == cand) {
            act.shop = ShopCommand::search;
            act.arg = span[1];
            return act;
          }
        }
        return fail("search argument is not an attribute word");
      }
      if (w == "click") {
        if (span.size() != 2) return fail("click takes one item token");
        const std::string& a = vocab.name(span[1]);
        if (a.size() == 5 && a.rfind("item", 0) == 0 && a[4] >= '1' && a[4] <= '6') {
          act.shop = ShopCommand::click;
          act.arg = a[4] - '1';
          return act;
        }
        return fail("click argument is not an item token");
      }
      if (w == "buy") {
        if (span.size() != 1) return fail("buy takes no argument");
        act.shop = ShopCommand::buy;
        return act;
      }
      return fail("not a shop command");
    }
  }
  return fail("unknown env kind");
}

}  // namespace vldac
