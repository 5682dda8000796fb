#include "env_impl.hpp"

// Arithmetic card task: three face-up cards (values 1..9), a running
// accumulator with a pending operator, and a target equal to the sum of a
// hidden nonempty card subset (so every episode is solvable with plus/pick).
// Grid 2x3: row 0 the cards (empty once consumed), row 1 accumulator tens,
// accumulator ones, pending operator. Channels: 0 empty, 1..9 digits,
// 10 plus, 11 mul.

namespace vldac::envs {

namespace {

constexpr std::uint8_t kChanPlus = 10, kChanMul = 11;
constexpr int kNumCards = 3;

}  // namespace

class CardEnv final : public BaseEnv {
 public:
  explicit CardEnv(const EnvSpec& spec) : BaseEnv(spec, Vocabulary::for_kind(spec.kind)) {}

  Observation reset(std::uint64_t episode_seed) override {
    episode_seed_ = episode_seed;
    time_ = 0;
    done_ = false;
    Rng rng(derive_seed(episode_seed, {0x63617264}));
    int subset = 0;
    for (int i = 0; i < kNumCards; ++i) {
      cards_[i] = 1 + rng.uniform_int(9);
      consumed_[i] = false;
    }
    subset = 1 + rng.uniform_int((1 << kNumCards) - 1);  // nonempty mask
    target_ = 0;
    for (int i = 0; i < kNumCards; ++i)
      if (subset & (1 << i)) target_ += cards_[i];
    acc_ = 0;
    pending_mul_ = false;
    start_frames(render());
    return make_obs(context());
  }

  StepOutcome step(const ParsedAction& action) override {
    guard_step();
    ++time_;
    bool success = false;
    bool terminal = false;
    const bool parsed = parse_ok(action);
    if (parsed) {
      const auto& act = std::get<EnvAction>(action);
      switch (act.card) {
        case CardCommand::pick:
          // grammatical but out-of-range / reused picks are no-ops
          if (act.arg >= 0 && act.arg < kNumCards && !consumed_[act.arg]) {
            acc_ = pending_mul_ ? acc_ * cards_[act.arg] : acc_ + cards_[act.arg];
            acc_ = std::min(acc_, 99);
            consumed_[act.arg] = true;
          }
          break;
        case CardCommand::plus: pending_mul_ = false; break;
        case CardCommand::mul: pending_mul_ = true; break;
        case CardCommand::submit:
          terminal = true;
          success = acc_ == target_;
          break;
      }
    }
    done_ = terminal || time_ >= spec_.horizon;
    push_frame(render());
    StepOutcome out;
    out.obs = make_obs(context());
    out.reward = assemble_reward(parsed, success);
    out.done = done_;
    out.success = success;
    out.parse_ok = parsed;
    return out;
  }

  std::vector<int> expert_action_tokens() const override {
    // find a remaining-card subset reaching the target with plus ops
    const int need = target_ - acc_;
    if (need == 0) return {vocab_.id("submit")};
    int best_mask = -1;
    for (int mask = 1; mask < (1 << kNumCards); ++mask) {
      int s = 0;
      bool usable = true;
      for (int i = 0; i < kNumCards; ++i) {
        if (!(mask & (1 << i))) continue;
        if (consumed_[i]) usable = false;
        s += cards_[i];
      }
      if (usable && s == need) {
        best_mask = mask;
        break;
      }
    }
    if (best_mask < 0) return {vocab_.id("submit")};  // unrecoverable; end it
    int first = 0;
    while (!(best_mask & (1 << first))) ++first;
    if (pending_mul_) return {vocab_.id("plus")};
    return {vocab_.id("pick"), vocab_.id(std::string(1, static_cast<char>('1' + first)))};
  }

  void save(std::ostream& os) const override {
    save_common(os);
    for (int i = 0; i < kNumCards; ++i) {
      ser::write_u32(os, static_cast<std::uint32_t>(cards_[i]));
      ser::write_u8(os, consumed_[i] ? 1 : 0);
    }
    ser::write_u32(os, static_cast<std::uint32_t>(acc_));
    ser::write_u32(os, static_cast<std::uint32_t>(target_));
    ser::write_u8(os, pending_mul_ ? 1 : 0);
  }

  void load(std::istream& is) override {
    load_common(is);
    for (int i = 0; i < kNumCards; ++i) {
      cards_[i] = static_cast<int>(ser::read_u32(is));
      consumed_[i] = ser::read_u8(is) != 0;
    }
    acc_ = static_cast<int>(ser::read_u32(is));
    target_ = static_cast<int>(ser::read_u32(is));
    pending_mul_ = ser::read_u8(is) != 0;
  }

 private:
  std::vector<std::uint8_t> render() const {
    std::vector<std::uint8_t> g(6, 0);
    for (int i = 0; i < kNumCards; ++i)
      g[static_cast<size_t>(i)] = consumed_[i] ? 0 : static_cast<std::uint8_t>(cards_[i]);
    const int tens = acc_ / 10, ones = acc_ % 10;
    g[3] = static_cast<std::uint8_t>(tens);  // 0 renders as empty
    g[4] = static_cast<std::uint8_t>(ones);
    g[5] = pending_mul_ ? kChanMul : kChanPlus;
    return g;
  }

  std::vector<int> context() const {
    const int tens = target_ / 10, ones = target_ % 10;
    std::vector<int> ctx = {vocab_.id("target"), Vocabulary::kPad, Vocabulary::kPad};
    if (tens > 0) ctx[1] = vocab_.id(std::string(1, static_cast<char>('0' + tens)));
    if (ones > 0) ctx[2] = vocab_.id(std::string(1, static_cast<char>('0' + ones)));
    return ctx;
  }

  int cards_[kNumCards] = {0, 0, 0};
  bool consumed_[kNumCards] = {false, false, false};
  int acc_ = 0;
  int target_ = 0;
  bool pending_mul_ = false;
};

std::unique_ptr<Env> make_card_env(const EnvSpec& spec) { return std::make_unique<CardEnv>(spec); }

}  // namespace vldac::envs
