#include <array>
#include <deque>

#include "env_impl.hpp"

// Grid navigation: a corridor (hallway_nav, 1x8) and a 7x7 walled room
// (rooms_nav, layouts one_room / wall_gap). Channels: 0 empty, 1 wall, 2 goal,
// 3..6 agent facing N/E/S/W. Turning and bumping a wall both cost a step.

namespace vldac::envs {

namespace {

constexpr std::uint8_t kEmpty = 0, kWall = 1, kGoal = 2, kAgentBase = 3;
constexpr int kDr[4] = {-1, 0, 1, 0};  // N E S W
constexpr int kDc[4] = {0, 1, 0, -1};

}  // namespace

class NavEnv final : public BaseEnv {
 public:
  explicit NavEnv(const EnvSpec& spec) : BaseEnv(spec, Vocabulary::for_kind(spec.kind)) {
    h_ = spec_.obs_dims().height;
    w_ = spec_.obs_dims().width;
  }

  Observation reset(std::uint64_t episode_seed) override {
    episode_seed_ = episode_seed;
    time_ = 0;
    done_ = false;
    Rng rng(derive_seed(episode_seed, {0x6E6176}));  // per-episode layout stream
    walls_.assign(static_cast<size_t>(h_) * w_, 0);
    if (spec_.kind == EnvKind::hallway_nav) {
      // fixed corridor: start at the west end facing the goal at the east end
      agent_r_ = 0;
      agent_c_ = 0;
      heading_ = 1;
      goal_r_ = 0;
      goal_c_ = w_ - 1;
    } else {
      for (int r = 0; r < h_; ++r)
        for (int c = 0; c < w_; ++c)
          if (r == 0 || c == 0 || r == h_ - 1 || c == w_ - 1) wall_at(r, c) = 1;
      if (spec_.layout == RoomsLayout::wall_gap) {
        const int gap_r = 1 + rng.uniform_int(h_ - 2);
        for (int r = 1; r < h_ - 1; ++r)
          if (r != gap_r) wall_at(r, 3) = 1;
        agent_r_ = 1 + rng.uniform_int(h_ - 2);
        agent_c_ = 1 + rng.uniform_int(2);  // west chamber
        goal_r_ = 1 + rng.uniform_int(h_ - 2);
        goal_c_ = 4 + rng.uniform_int(2);  // east chamber
      } else {
        agent_r_ = 1 + rng.uniform_int(h_ - 2);
        agent_c_ = 1 + rng.uniform_int(w_ - 2);
        do {
          goal_r_ = 1 + rng.uniform_int(h_ - 2);
          goal_c_ = 1 + rng.uniform_int(w_ - 2);
        } while (goal_r_ == agent_r_ && goal_c_ == agent_c_);
      }
      heading_ = rng.uniform_int(4);
    }
    start_frames(render());
    return make_obs(context());
  }

  StepOutcome step(const ParsedAction& action) override {
    guard_step();
    ++time_;
    bool success = false;
    const bool parsed = parse_ok(action);
    if (parsed) {
      const auto& act = std::get<EnvAction>(action);
      switch (act.nav) {
        case NavCommand::turn_left: heading_ = (heading_ + 3) % 4; break;
        case NavCommand::turn_right: heading_ = (heading_ + 1) % 4; break;
        case NavCommand::forward: {
          const int nr = agent_r_ + kDr[heading_];
          const int nc = agent_c_ + kDc[heading_];
          if (nr >= 0 && nr < h_ && nc >= 0 && nc < w_ && wall_at(nr, nc) == 0) {
            agent_r_ = nr;
            agent_c_ = nc;
          }
          break;
        }
      }
      success = agent_r_ == goal_r_ && agent_c_ == goal_c_;
    }
    done_ = success || time_ >= spec_.horizon;
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
    // BFS over (row, col, heading) with unit-cost {left, right, forward}
    const int states = h_ * w_ * 4;
    std::vector<int> dist(static_cast<size_t>(states), -1);
    std::vector<int> first_act(static_cast<size_t>(states), -1);
    auto enc = [&](int r, int c, int hd) { return (r * w_ + c) * 4 + hd; };
    std::deque<int> q;
    const int start = enc(agent_r_, agent_c_, heading_);
    dist[static_cast<size_t>(start)] = 0;
    q.push_back(start);
    int found = -1;
    while (!q.empty()) {
      const int s = q.front();
      q.pop_front();
      const int hd = s % 4, c = (s / 4) % w_, r = s / (4 * w_);
      if (r == goal_r_ && c == goal_c_) {
        found = s;
        break;
      }
      for (int a = 0; a < 3; ++a) {
        int ns;
        if (a == 0) ns = enc(r, c, (hd + 3) % 4);
        else if (a == 1) ns = enc(r, c, (hd + 1) % 4);
        else {
          int tr = r + kDr[hd];
          int tc = c + kDc[hd];
          if (tr < 0 || tr >= h_ || tc < 0 || tc >= w_ || wall_at(tr, tc) != 0) {
            tr = r;
            tc = c;
          }
          ns = enc(tr, tc, hd);
        }
        if (dist[static_cast<size_t>(ns)] < 0) {
          dist[static_cast<size_t>(ns)] = dist[static_cast<size_t>(s)] + 1;
          first_act[static_cast<size_t>(ns)] =
              dist[static_cast<size_t>(s)] == 0 ? a : first_act[static_cast<size_t>(s)];
          q.push_back(ns);
        }
      }
    }
    if (found < 0) throw SpecError("nav expert: goal unreachable from current state");
    const int a = first_act[static_cast<size_t>(found)];
    static const char* kNames[3] = {"turn_left", "turn_right", "forward"};
    return {vocab_.id(kNames[a < 0 ? 2 : a])};  // already on goal: any move; won't happen live
  }

  void save(std::ostream& os) const override {
    save_common(os);
    ser::write_vec_u8(os, walls_);
    for (int v : {agent_r_, agent_c_, heading_, goal_r_, goal_c_})
      ser::write_u32(os, static_cast<std::uint32_t>(v));
  }

  void load(std::istream& is) override {
    load_common(is);
    walls_ = ser::read_vec_u8(is);
    agent_r_ = static_cast<int>(ser::read_u32(is));
    agent_c_ = static_cast<int>(ser::read_u32(is));
    heading_ = static_cast<int>(ser::read_u32(is));
    goal_r_ = static_cast<int>(ser::read_u32(is));
    goal_c_ = static_cast<int>(ser::read_u32(is));
  }

 private:
  std::uint8_t& wall_at(int r, int c) { return walls_[static_cast<size_t>(r) * w_ + c]; }
  std::uint8_t wall_at(int r, int c) const { return walls_[static_cast<size_t>(r) * w_ + c]; }

  std::vector<std::uint8_t> render() const {
    std::vector<std::uint8_t> g(walls_.begin(), walls_.end());
    for (auto& v : g) v = v ? kWall : kEmpty;
    g[static_cast<size_t>(goal_r_) * w_ + goal_c_] = kGoal;
    g[static_cast<size_t>(agent_r_) * w_ + agent_c_] = static_cast<std::uint8_t>(kAgentBase + heading_);
    return g;
  }

  std::vector<int> context() const { return {vocab_.id("goal")}; }

  int h_ = 0, w_ = 0;
  std::vector<std::uint8_t> walls_;
  int agent_r_ = 0, agent_c_ = 0, heading_ = 1;
  int goal_r_ = 0, goal_c_ = 0;
};

std::unique_ptr<Env> make_nav_env(const EnvSpec& spec) { return std::make_unique<NavEnv>(spec); }

}  // namespace vldac::envs
