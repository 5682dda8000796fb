#include "env_impl.hpp"

// Instruction shopping: six distinct items, each a (color, kind, size) triple;
// the instruction names one item exactly. search <word> marks every item's
// corresponding slot as match/mismatch, click selects, buy ends the episode.
// Grid 6x4: one row per item, columns 0..2 the three slot marks, column 3 the
// selection flag. Channels: 0 empty, 1 hidden, 2 match, 3 mismatch, 4 selected.

namespace vldac::envs {

namespace {

constexpr std::uint8_t kHidden = 1, kMatch = 2, kMismatch = 3, kSelected = 4;
constexpr int kNumItems = 6, kNumSlots = 3;
const char* kSlotWords[kNumSlots][3] = {
    {"red", "green", "blue"}, {"hat", "mug", "pen"}, {"big", "small", "mid"}};

}  // namespace

class ShopEnv final : public BaseEnv {
 public:
  explicit ShopEnv(const EnvSpec& spec) : BaseEnv(spec, Vocabulary::for_kind(spec.kind)) {}

  Observation reset(std::uint64_t episode_seed) override {
    episode_seed_ = episode_seed;
    time_ = 0;
    done_ = false;
    Rng rng(derive_seed(episode_seed, {0x73686F70}));
    // six distinct triples out of 27
    std::vector<int> combos(27);
    for (int i = 0; i < 27; ++i) combos[static_cast<size_t>(i)] = i;
    shuffle(combos, rng);
    for (int i = 0; i < kNumItems; ++i) {
      const int code = combos[static_cast<size_t>(i)];
      items_[i][0] = code / 9;
      items_[i][1] = (code / 3) % 3;
      items_[i][2] = code % 3;
    }
    target_ = rng.uniform_int(kNumItems);
    for (auto& s : searched_word_) s = -1;
    selected_ = -1;
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
      switch (act.shop) {
        case ShopCommand::search: {
          const auto [slot, value] = word_slot(act.arg);
          searched_word_[slot] = value;
          break;
        }
        case ShopCommand::click:
          if (act.arg >= 0 && act.arg < kNumItems) selected_ = act.arg;
          break;
        case ShopCommand::buy:
          terminal = true;
          success = selected_ == target_;
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
    if (selected_ == target_) return {vocab_.id("buy")};
    for (int s = 0; s < kNumSlots; ++s) {
      if (searched_word_[s] != items_[target_][s])
        return {vocab_.id("search"), vocab_.id(kSlotWords[s][items_[target_][s]])};
    }
    return {vocab_.id("click"), vocab_.id("item" + std::to_string(target_ + 1))};
  }

  void save(std::ostream& os) const override {
    save_common(os);
    for (auto& item : items_)
      for (int a : item) ser::write_u32(os, static_cast<std::uint32_t>(a));
    ser::write_u32(os, static_cast<std::uint32_t>(target_));
    for (int s : searched_word_) ser::write_u32(os, static_cast<std::uint32_t>(s));
    ser::write_u32(os, static_cast<std::uint32_t>(selected_));
  }

  void load(std::istream& is) override {
    load_common(is);
    for (auto& item : items_)
      for (int& a : item) a = static_cast<int>(ser::read_u32(is));
    target_ = static_cast<int>(ser::read_u32(is));
    for (int& s : searched_word_) s = static_cast<int>(ser::read_u32(is));
    selected_ = static_cast<int>(ser::read_u32(is));
  }

 private:
  // attribute word token id -> (slot, value-in-slot)
  std::pair<int, int> word_slot(int token_id) const {
    const std::string& w = vocab_.name(token_id);
    for (int s = 0; s < kNumSlots; ++s)
      for (int v = 0; v < 3; ++v)
        if (w == kSlotWords[s][v]) return {s, v};
    throw VocabError("'" + w + "' is not an attribute word");
  }

  std::vector<std::uint8_t> render() const {
    std::vector<std::uint8_t> g(static_cast<size_t>(kNumItems) * 4, 0);
    for (int i = 0; i < kNumItems; ++i) {
      for (int s = 0; s < kNumSlots; ++s) {
        std::uint8_t m = kHidden;
        if (searched_word_[s] >= 0)
          m = items_[i][s] == searched_word_[s] ? kMatch : kMismatch;
        g[static_cast<size_t>(i) * 4 + s] = m;
      }
      g[static_cast<size_t>(i) * 4 + 3] = (selected_ == i) ? kSelected : 0;
    }
    return g;
  }

  std::vector<int> context() const {
    std::vector<int> ctx;
    for (int s = 0; s < kNumSlots; ++s) ctx.push_back(vocab_.id(kSlotWords[s][items_[target_][s]]));
    return ctx;
  }

  int items_[kNumItems][kNumSlots] = {};
  int target_ = 0;
  int searched_word_[kNumSlots] = {-1, -1, -1};
  int selected_ = -1;
};

std::unique_ptr<Env> make_shop_env(const EnvSpec& spec) { return std::make_unique<ShopEnv>(spec); }

}  // namespace vldac::envs
