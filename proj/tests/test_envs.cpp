#include <doctest.h>

#include <sstream>

#include "vldac/envs/env.hpp"
#include "vldac/rng.hpp"

using namespace vldac;

namespace {

ParsedAction cmd(const Env& env, const std::vector<std::string>& words) {
  std::vector<int> span;
  for (const auto& w : words) span.push_back(env.vocab().id(w));
  return parse_action(wrap_action_tokens(span), env.vocab(), env.spec().kind);
}

// cell-type id of (frame l, row r, col c) recovered from the one-hot planes
int plane_argmax(const Observation& obs, int l, int r, int c) {
  auto flat = obs.frames_flat();
  const int C = obs.dims.channels, H = obs.dims.height, W = obs.dims.width;
  for (int ch = 0; ch < C; ++ch)
    if (flat[((static_cast<size_t>(l) * C + ch) * H + r) * W + c] == 1.0) return ch;
  return -1;
}

}  // namespace

TEST_CASE("envs: observation one-hot expansion is exact") {
  auto env = make_env(EnvSpec::make(EnvKind::hallway_nav));
  auto obs = env->reset(7);
  obs.validate();
  auto flat = obs.frames_flat();
  const auto d = obs.dims;
  CHECK(static_cast<int>(flat.size()) == d.flat_size());
  // exactly one hot channel per (frame, cell)
  for (int l = 0; l < d.frame_stack; ++l)
    for (int r = 0; r < d.height; ++r)
      for (int c = 0; c < d.width; ++c) {
        double s = 0;
        for (int ch = 0; ch < d.channels; ++ch)
          s += flat[((static_cast<size_t>(l) * d.channels + ch) * d.height + r) * d.width + c];
        CHECK(s == 1.0);
      }

  Observation bad = obs;
  bad.cells[0] = static_cast<std::uint8_t>(d.channels);
  CHECK_THROWS_AS(bad.validate(), ObservationError);
  Observation bad2 = obs;
  bad2.cells.pop_back();
  CHECK_THROWS_AS(bad2.validate(), ObservationError);
}

TEST_CASE("envs: vocabularies have fixed specials and frozen sizes") {
  for (auto kind : {EnvKind::hallway_nav, EnvKind::rooms_nav, EnvKind::card_points, EnvKind::tiny_shop}) {
    auto v = Vocabulary::for_kind(kind);
    CHECK(v.name(Vocabulary::kPad) == "<pad>");
    CHECK(v.name(Vocabulary::kBos) == "<bos>");
    CHECK(v.name(Vocabulary::kEos) == "<eos>");
    CHECK(v.name(Vocabulary::kSep) == "<sep>");
    CHECK_THROWS_AS(v.id("definitely_not_a_token"), VocabError);
    CHECK_THROWS_AS(v.name(v.size()), VocabError);
  }
  CHECK(Vocabulary::for_kind(EnvKind::hallway_nav).size() == 8);
  CHECK(Vocabulary::for_kind(EnvKind::rooms_nav).size() == 8);
  CHECK(Vocabulary::for_kind(EnvKind::card_points).size() == 18);
  CHECK(Vocabulary::for_kind(EnvKind::tiny_shop).size() == 22);
  CHECK_THROWS_AS(Vocabulary({"<pad>", "<bos>", "<eos>", "<sep>", "a", "a"}), VocabError);
  CHECK_THROWS_AS(Vocabulary({"<bos>", "<pad>", "<eos>", "<sep>", "a", "b"}), VocabError);
}

TEST_CASE("envs: emission spans") {
  // [BOS] t1 t2 [SEP] a1 [EOS]
  ActionEmission e;
  e.tokens = {Vocabulary::kBos, 5, 6, Vocabulary::kSep, 7, Vocabulary::kEos};
  e.sep_pos = 3;
  CHECK(e.thought_span() == std::pair<int, int>{1, 3});
  CHECK(e.action_span() == std::pair<int, int>{4, 5});

  ActionEmission trunc;  // no EOS: action span runs to the end
  trunc.tokens = {Vocabulary::kBos, Vocabulary::kSep, 7, 8};
  trunc.sep_pos = 1;
  trunc.truncated = true;
  CHECK(trunc.action_span() == std::pair<int, int>{2, 4});

  ActionEmission nosep;
  nosep.tokens = {Vocabulary::kBos, 5, Vocabulary::kEos};
  CHECK(nosep.thought_span().first == nosep.thought_span().second);
  CHECK(nosep.action_span().first == nosep.action_span().second);
}

TEST_CASE("envs: parser accepts the command grammar and rejects garbage with reasons") {
  auto vnav = Vocabulary::for_kind(EnvKind::hallway_nav);
  auto ok = parse_action(wrap_action_tokens({vnav.id("forward")}), vnav, EnvKind::hallway_nav);
  REQUIRE(parse_ok(ok));
  CHECK(std::get<EnvAction>(ok).nav == NavCommand::forward);

  auto twoTok = parse_action(wrap_action_tokens({vnav.id("forward"), vnav.id("forward")}), vnav,
                             EnvKind::hallway_nav);
  REQUIRE_FALSE(parse_ok(twoTok));
  CHECK(std::get<ParseFailure>(twoTok).reason == "navigation takes exactly one command token");

  auto noise = parse_action(wrap_action_tokens({vnav.id("goal")}), vnav, EnvKind::hallway_nav);
  REQUIRE_FALSE(parse_ok(noise));

  ActionEmission nosep;
  nosep.tokens = {Vocabulary::kBos, vnav.id("forward"), Vocabulary::kEos};
  nosep.sep_pos = -1;
  auto r = parse_action(nosep, vnav, EnvKind::hallway_nav);
  REQUIRE_FALSE(parse_ok(r));
  CHECK(std::get<ParseFailure>(r).reason == "no <sep> before the action span");

  auto empty = parse_action(wrap_action_tokens({}), vnav, EnvKind::hallway_nav);
  REQUIRE_FALSE(parse_ok(empty));
  CHECK(std::get<ParseFailure>(empty).reason == "empty action span");

  // thought span is free-form; only the action span must parse
  ActionEmission withThought;
  withThought.tokens = {Vocabulary::kBos, vnav.id("goal"), vnav.id("goal"), Vocabulary::kSep,
                        vnav.id("turn_left"), Vocabulary::kEos};
  withThought.sep_pos = 3;
  CHECK(parse_ok(parse_action(withThought, vnav, EnvKind::hallway_nav)));

  // out-of-vocab ids throw rather than soft-fail
  ActionEmission badId;
  badId.tokens = {Vocabulary::kBos, Vocabulary::kSep, 99, Vocabulary::kEos};
  badId.sep_pos = 1;
  CHECK_THROWS_AS(parse_action(badId, vnav, EnvKind::hallway_nav), VocabError);

  auto vcard = Vocabulary::for_kind(EnvKind::card_points);
  auto pick = parse_action(wrap_action_tokens({vcard.id("pick"), vcard.id("2")}), vcard,
                           EnvKind::card_points);
  REQUIRE(parse_ok(pick));
  CHECK(std::get<EnvAction>(pick).card == CardCommand::pick);
  CHECK(std::get<EnvAction>(pick).arg == 1);
  CHECK_FALSE(parse_ok(parse_action(wrap_action_tokens({vcard.id("pick")}), vcard, EnvKind::card_points)));
  CHECK(parse_ok(parse_action(wrap_action_tokens({vcard.id("submit")}), vcard, EnvKind::card_points)));

  auto vshop = Vocabulary::for_kind(EnvKind::tiny_shop);
  auto search = parse_action(wrap_action_tokens({vshop.id("search"), vshop.id("blue")}), vshop,
                             EnvKind::tiny_shop);
  REQUIRE(parse_ok(search));
  CHECK(std::get<EnvAction>(search).shop == ShopCommand::search);
  auto click = parse_action(wrap_action_tokens({vshop.id("click"), vshop.id("item4")}), vshop,
                            EnvKind::tiny_shop);
  REQUIRE(parse_ok(click));
  CHECK(std::get<EnvAction>(click).arg == 3);
  CHECK_FALSE(
      parse_ok(parse_action(wrap_action_tokens({vshop.id("search"), vshop.id("item1")}), vshop,
                            EnvKind::tiny_shop)));
}

TEST_CASE("envs: hallway frozen episode walkthrough") {
  auto env = make_env(EnvSpec::make(EnvKind::hallway_nav));
  auto obs = env->reset(42);
  // agent at west end facing east (channel 4), goal at the east end (channel 2)
  CHECK(plane_argmax(obs, 3, 0, 0) == 4);
  CHECK(plane_argmax(obs, 3, 0, 7) == 2);
  for (int c = 1; c < 7; ++c) CHECK(plane_argmax(obs, 3, 0, c) == 0);
  CHECK(obs.context_tokens == std::vector<int>{env->vocab().id("goal")});

  for (int i = 0; i < 6; ++i) {
    auto out = env->step(cmd(*env, {"forward"}));
    CHECK(out.reward == 0.0);
    CHECK_FALSE(out.done);
    CHECK(plane_argmax(out.obs, 3, 0, i + 1) == 4);
  }
  auto final = env->step(cmd(*env, {"forward"}));
  CHECK(final.done);
  CHECK(final.success);
  CHECK(final.reward == 1.0);
  CHECK(env->time() == 7);
  CHECK_THROWS_AS(env->step(cmd(*env, {"forward"})), EpisodeDoneError);
}

TEST_CASE("envs: hallway horizon timeout and parse penalties") {
  auto env = make_env(EnvSpec::make(EnvKind::hallway_nav));
  auto first = env->reset(1);
  StepOutcome out;
  for (int i = 0; i < 20; ++i) {
    CHECK_FALSE(env->done());
    out = env->step(cmd(*env, {"turn_left"}));
  }
  CHECK(out.done);
  CHECK_FALSE(out.success);
  CHECK(out.reward == 0.0);

  env->reset(1);
  auto fail = env->step(parse_action(wrap_action_tokens({}), env->vocab(), EnvKind::hallway_nav));
  CHECK_FALSE(fail.parse_ok);
  CHECK(fail.reward == kParseFailurePenalty);
  CHECK(fail.obs == first);  // state untouched; frames identical since reset
}

TEST_CASE("envs: shaped rewards add a time cost") {
  auto spec = EnvSpec::make(EnvKind::hallway_nav);
  spec.reward = RewardScheme::shaped;
  auto env = make_env(spec);
  env->reset(5);
  auto out = env->step(cmd(*env, {"turn_right"}));
  CHECK(out.reward == doctest::Approx(-0.05));  // -1/20
  auto fail = env->step(parse_action(wrap_action_tokens({}), env->vocab(), EnvKind::hallway_nav));
  CHECK(fail.reward == doctest::Approx(-0.06));
  env->step(cmd(*env, {"turn_left"}));  // back to east
  for (int i = 0; i < 6; ++i) env->step(cmd(*env, {"forward"}));
  auto last = env->step(cmd(*env, {"forward"}));
  CHECK(last.success);
  CHECK(last.reward == 1.0);  // success pays full even under shaping
}

TEST_CASE("envs: rooms layouts are solvable and deterministic") {
  for (auto layout : {RoomsLayout::one_room, RoomsLayout::wall_gap}) {
    auto spec = EnvSpec::make(EnvKind::rooms_nav);
    spec.layout = layout;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      int steps = success_oracle(spec, seed);
      CHECK(steps >= 1);
      CHECK(steps <= spec.horizon);
    }
    auto e1 = make_env(spec);
    auto e2 = make_env(spec);
    CHECK(e1->reset(123) == e2->reset(123));
    bool differs = false;
    for (std::uint64_t s = 0; s < 8 && !differs; ++s)
      differs = !(e1->reset(s) == e1->reset(s + 100));
    CHECK(differs);
  }
}

TEST_CASE("envs: wall_gap really separates the chambers") {
  auto spec = EnvSpec::make(EnvKind::rooms_nav);
  spec.layout = RoomsLayout::wall_gap;
  auto env = make_env(spec);
  auto obs = env->reset(77);
  int gaps = 0;
  for (int r = 1; r < 6; ++r) {
    int ch = plane_argmax(obs, 3, r, 3);
    if (ch != 1) ++gaps;  // not wall: either the gap or an agent standing in it
  }
  CHECK(gaps == 1);
  // border ring is wall
  for (int c = 0; c < 7; ++c) {
    CHECK(plane_argmax(obs, 3, 0, c) == 1);
    CHECK(plane_argmax(obs, 3, 6, c) == 1);
  }
}

TEST_CASE("envs: card task machine decoded from observations") {
  auto spec = EnvSpec::make(EnvKind::card_points);
  CHECK(spec.frame_stack == 1);
  auto env = make_env(spec);
  auto obs = env->reset(9);
  // decode card values and the target from obs + context
  int cards[3];
  for (int i = 0; i < 3; ++i) {
    cards[i] = plane_argmax(obs, 0, 0, i);
    CHECK(cards[i] >= 1);
    CHECK(cards[i] <= 9);
  }
  CHECK(plane_argmax(obs, 0, 1, 0) == 0);   // acc tens = 0
  CHECK(plane_argmax(obs, 0, 1, 1) == 0);   // acc ones = 0
  CHECK(plane_argmax(obs, 0, 1, 2) == 10);  // pending plus
  const auto& v = env->vocab();
  const auto& ctx = obs.context_tokens;
  REQUIRE(ctx.size() == 3);
  CHECK(v.name(ctx[0]) == "target");
  auto digit = [&](int tok) { return tok == Vocabulary::kPad ? 0 : std::stoi(v.name(tok)); };
  const int target = 10 * digit(ctx[1]) + digit(ctx[2]);
  CHECK(target >= 1);
  CHECK(target <= 27);

  // pick card 1, observe accumulator and consumption
  auto out = env->step(cmd(*env, {"pick", "1"}));
  CHECK(plane_argmax(out.obs, 0, 0, 0) == 0);  // consumed
  CHECK(plane_argmax(out.obs, 0, 1, 1) == cards[0] % 10);
  // switch to mul and pick card 2: acc = c1 * c2
  env->step(cmd(*env, {"mul"}));
  auto out2 = env->step(cmd(*env, {"pick", "2"}));
  const int acc = cards[0] * cards[1];
  CHECK(plane_argmax(out2.obs, 0, 1, 0) == (acc / 10) % 10);
  CHECK(plane_argmax(out2.obs, 0, 1, 1) == acc % 10);
  CHECK(plane_argmax(out2.obs, 0, 1, 2) == 11);  // pending mul

  // re-picking a consumed card is a grammatical no-op
  auto noop = env->step(cmd(*env, {"pick", "1"}));
  CHECK(noop.parse_ok);
  CHECK(plane_argmax(noop.obs, 0, 1, 0) == (acc / 10) % 10);
  CHECK(plane_argmax(noop.obs, 0, 1, 1) == acc % 10);

  auto sub = env->step(cmd(*env, {"submit"}));
  CHECK(sub.done);
  CHECK(sub.success == (acc == target));
}

TEST_CASE("envs: card expert solves every instance") {
  auto spec = EnvSpec::make(EnvKind::card_points);
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    int steps = success_oracle(spec, seed);
    CHECK(steps <= 4);  // at most 3 picks + submit
  }
}

TEST_CASE("envs: shop search marks, click, and buy") {
  auto spec = EnvSpec::make(EnvKind::tiny_shop);
  auto env = make_env(spec);
  auto obs = env->reset(31);
  const auto& v = env->vocab();
  REQUIRE(obs.context_tokens.size() == 3);
  const std::string target_color = v.name(obs.context_tokens[0]);

  // everything hidden at reset, nothing selected
  for (int i = 0; i < 6; ++i) {
    for (int s = 0; s < 3; ++s) CHECK(plane_argmax(obs, 3, i, s) == 1);
    CHECK(plane_argmax(obs, 3, i, 3) == 0);
  }

  auto out = env->step(cmd(*env, {"search", target_color}));
  int matches = 0;
  for (int i = 0; i < 6; ++i) {
    int m = plane_argmax(out.obs, 3, i, 0);
    CHECK((m == 2 || m == 3));
    if (m == 2) ++matches;
    CHECK(plane_argmax(out.obs, 3, i, 1) == 1);  // other slots untouched
  }
  CHECK(matches >= 1);  // the target at minimum

  auto sel = env->step(cmd(*env, {"click", "item3"}));
  CHECK(plane_argmax(sel.obs, 3, 2, 3) == 4);
  auto sel2 = env->step(cmd(*env, {"click", "item5"}));
  CHECK(plane_argmax(sel2.obs, 3, 2, 3) == 0);  // selection moved
  CHECK(plane_argmax(sel2.obs, 3, 4, 3) == 4);

  auto buy = env->step(cmd(*env, {"buy"}));
  CHECK(buy.done);
  // reward is 1 only if item5 happened to be the target
  CHECK(buy.reward == (buy.success ? 1.0 : 0.0));
}

TEST_CASE("envs: shop expert solves every instance in five steps") {
  auto spec = EnvSpec::make(EnvKind::tiny_shop);
  for (std::uint64_t seed = 0; seed < 500; ++seed) CHECK(success_oracle(spec, seed) == 5);
}

TEST_CASE("envs: buying with no selection fails the episode") {
  auto env = make_env(EnvSpec::make(EnvKind::tiny_shop));
  env->reset(3);
  auto out = env->step(cmd(*env, {"buy"}));
  CHECK(out.done);
  CHECK_FALSE(out.success);
  CHECK(out.reward == 0.0);
}

TEST_CASE("envs: state serialization resumes identically") {
  for (auto kind : {EnvKind::hallway_nav, EnvKind::rooms_nav, EnvKind::card_points, EnvKind::tiny_shop}) {
    auto spec = EnvSpec::make(kind);
    auto env = make_env(spec);
    env->reset(555);
    // advance up to two expert steps
    for (int i = 0; i < 2 && !env->done(); ++i)
      env->step(parse_action(wrap_action_tokens(env->expert_action_tokens()), env->vocab(), kind));

    std::stringstream buf;
    env->save(buf);
    auto env2 = make_env(spec);
    env2->load(buf);
    CHECK(env2->time() == env->time());
    CHECK(env2->episode_seed() == env->episode_seed());

    while (!env->done()) {
      auto a1 = env->expert_action_tokens();
      auto a2 = env2->expert_action_tokens();
      CHECK(a1 == a2);
      auto o1 = env->step(parse_action(wrap_action_tokens(a1), env->vocab(), kind));
      auto o2 = env2->step(parse_action(wrap_action_tokens(a2), env2->vocab(), kind));
      CHECK(o1.obs == o2.obs);
      CHECK(o1.reward == o2.reward);
      CHECK(o1.done == o2.done);
    }
    CHECK(env2->done());
  }
}

TEST_CASE("envs: spec validation and frozen defaults") {
  CHECK(EnvSpec::make(EnvKind::hallway_nav).horizon == 20);
  CHECK(EnvSpec::make(EnvKind::rooms_nav).horizon == 40);
  CHECK(EnvSpec::make(EnvKind::card_points).horizon == 6);
  CHECK(EnvSpec::make(EnvKind::tiny_shop).horizon == 8);
  CHECK(EnvSpec::make(EnvKind::hallway_nav).frame_stack == 4);
  CHECK(EnvSpec::make(EnvKind::card_points).frame_stack == 1);

  EnvSpec bad = EnvSpec::make(EnvKind::hallway_nav);
  bad.horizon = 1;
  CHECK_THROWS_AS(bad.validate(), SpecError);
  bad = EnvSpec::make(EnvKind::hallway_nav);
  bad.frame_stack = 9;
  CHECK_THROWS_AS(bad.validate(), SpecError);
  CHECK_THROWS_AS(env_kind_from_name("bogus"), SpecError);
  CHECK(env_kind_from_name("rooms_nav") == EnvKind::rooms_nav);
  CHECK(reward_scheme_from_name("shaped") == RewardScheme::shaped);
  CHECK_THROWS_AS(reward_scheme_from_name("x"), SpecError);
}

TEST_CASE("envs: step before reset throws") {
  auto env = make_env(EnvSpec::make(EnvKind::hallway_nav));
  CHECK_THROWS_AS(env->step(cmd(*env, {"forward"})), EpisodeDoneError);
}
