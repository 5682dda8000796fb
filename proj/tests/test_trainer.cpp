#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vldac/algos/losses.hpp"
#include "vldac/train/trainer.hpp"

using namespace vldac;
using namespace vldac::train;

namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config(Algo algo) {
  TrainConfig cfg = TrainConfig::defaults_for(algo);
  cfg.env = EnvSpec::make(EnvKind::hallway_nav);
  cfg.seed = 42;
  cfg.total_env_steps = 64;
  cfg.segment_len = 16;
  cfg.num_envs = 2;
  cfg.ppo_epochs = 2;
  cfg.grad_accum = 4;
  cfg.eval_episodes = 4;
  cfg.eval_every = 2;
  cfg.checkpoint_every = 2;
  cfg.td_value_iters = 2;
  cfg.td_value_batch = 8;
  cfg.format_pretrain_steps = 0;
  cfg.policy.feature_dim = 16;
  cfg.policy.backbone_hidden = 12;
  cfg.policy.ctx_embed = 4;
  cfg.policy.tok_embed = 8;
  cfg.policy.head_hidden = 12;
  cfg.policy.value_hidden = 8;
  cfg.policy.max_tokens = 6;
  cfg.resolve();
  return cfg;
}

std::string params_bytes(policy::TokenPolicy& pol) {
  std::ostringstream os;
  pol.save_params(os);
  return os.str();
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config: per-algorithm defaults") {
  const auto v = TrainConfig::defaults_for(Algo::vldac);
  CHECK(v.beta == 0.05);
  CHECK(v.warmup_updates == 2);
  CHECK(v.stop_grad_value);
  CHECK(v.alpha == 0.15);
  CHECK(v.total_env_steps == 51200);
  CHECK(v.lr_start == 5e-5);
  CHECK(v.lr_end == 1e-7);
  CHECK(v.grad_accum == 128);
  CHECK(v.minibatch == 1);
  CHECK(v.ppo_epochs == 2);
  CHECK(v.clip_eps == 0.2);
  CHECK(v.gamma == 0.99);
  CHECK(v.gae_lambda == 0.95);
  CHECK(v.eval_episodes == 50);
  CHECK(v.format_pretrain_steps == 300);
  CHECK(v.format_pretrain_lr == 5e-3);
  CHECK(v.format_pretrain_batch == 32);

  const auto r = TrainConfig::defaults_for(Algo::rl4vlm);
  CHECK(r.beta == 0.0);
  CHECK(r.warmup_updates == 0);
  CHECK_FALSE(r.stop_grad_value);

  const auto l = TrainConfig::defaults_for(Algo::loop);
  CHECK(l.beta == 0.0);
  CHECK(l.alpha == 0.0);

  const auto t = TrainConfig::defaults_for(Algo::td);
  CHECK(t.beta == 0.0);
  CHECK(t.warmup_updates == 0);
  CHECK(t.stop_grad_value);
}

TEST_CASE("config: parsing, comments, and algo-aware defaults") {
  std::istringstream in(
      "[run]\n"
      "algo = rl4vlm   # picks the step-level baseline\n"
      "seed = 9\n"
      "\n"
      "[rollout]\n"
      "segment_len = 32 ; inline comment\n"
      "num_envs = 4\n"
      "total_env_steps = 64\n");
  const TrainConfig cfg = parse_config(in);
  CHECK(cfg.algo == Algo::rl4vlm);
  CHECK(cfg.seed == 9);
  CHECK(cfg.segment_len == 32);
  CHECK(cfg.num_envs == 4);
  CHECK(cfg.beta == 0.0);            // rl4vlm default survives key overlay
  CHECK(cfg.warmup_updates == 0);
  CHECK(cfg.run_name == "rl4vlm_hallway_nav_s9");
  CHECK(cfg.env.horizon == 20);      // env defaults resolved
}

TEST_CASE("config: unknown keys suggest the nearest real key") {
  std::istringstream in("gradaccum = 4\n");
  try {
    parse_config(in);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("gradaccum") != std::string::npos);
    CHECK(msg.find("grad_accum") != std::string::npos);
  }
}

TEST_CASE("config: malformed input throws") {
  auto reject = [](const std::string& text) {
    std::istringstream in(text);
    CHECK_THROWS_AS(parse_config(in), ConfigError);
  };
  reject("seed = 1\nseed = 2\n");       // duplicate
  reject("segment_len = banana\n");     // bad int
  reject("lr_start = 1e-8\nlr_end = 1e-3\n");  // end above start
  reject("segment_len = 30\nnum_envs = 8\n");  // not divisible
  reject("[broken\nseed = 1\n");        // unterminated section
  reject("just some words\n");          // no equals sign
  reject("clip_eps = 1.5\n");           // out of range
}

TEST_CASE("config: dump round-trips and fingerprints separate configs") {
  TrainConfig cfg = tiny_config(Algo::vldac);
  std::istringstream in(dump_config(cfg));
  const TrainConfig back = parse_config(in);
  CHECK(back == cfg);
  CHECK(config_fingerprint(back) == config_fingerprint(cfg));

  TrainConfig other = cfg;
  other.alpha = 0.2;
  CHECK(config_fingerprint(other) != config_fingerprint(cfg));
}

TEST_CASE("config: edit distance oracle") {
  CHECK(edit_distance("kitten", "sitting") == 3);
  CHECK(edit_distance("", "abc") == 3);
  CHECK(edit_distance("same", "same") == 0);
  CHECK(edit_distance("gradaccum", "grad_accum") == 1);
}

TEST_CASE("losses: per-scalar token clip overload matches the packed tensor form") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + rng.uniform_int(6);
    std::vector<double> vals(static_cast<size_t>(n)), old(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      vals[static_cast<size_t>(i)] = 0.05 + rng.uniform() * 0.9;
      old[static_cast<size_t>(i)] = 0.05 + rng.uniform() * 0.9;
    }
    const double adv = rng.uniform() * 4 - 2;

    auto packed = diff::Tensor::from({n}, vals, true);
    auto packed_loss = algos::token_clip_step_loss(packed, old, adv, 0.2);
    diff::backward(packed_loss);

    std::vector<diff::Tensor> scalars;
    for (int i = 0; i < n; ++i)
      scalars.push_back(diff::Tensor::from({1}, {vals[static_cast<size_t>(i)]}, true));
    auto scalar_loss = algos::token_clip_step_loss(scalars, old, adv, 0.2);
    diff::backward(scalar_loss);

    CHECK(scalar_loss.value() == doctest::Approx(packed_loss.value()).epsilon(1e-14));
    for (int i = 0; i < n; ++i)
      CHECK(scalars[static_cast<size_t>(i)].grad()[0] ==
            doctest::Approx(packed.grad()[static_cast<size_t>(i)]).epsilon(1e-14));
  }
}

TEST_CASE("rollout: vectorized collection is deterministic and well-formed") {
  const auto cfg = tiny_config(Algo::vldac);
  policy::TokenPolicy pol(Vocabulary::for_kind(cfg.env.kind), cfg.env.obs_dims(), cfg.policy, 7);

  VecRollout a(cfg.env, 2, 99), b(cfg.env, 2, 99), c(cfg.env, 2, 100);
  Segment sa = a.collect(pol, 8);
  Segment sb = b.collect(pol, 8);
  Segment sc = c.collect(pol, 8);

  CHECK(sa.env_steps() == 16);
  REQUIRE(sa.traces.size() == 2);
  bool any_diff = false;
  for (size_t tr = 0; tr < 2; ++tr) {
    REQUIRE(sa.traces[tr].steps.size() == 8);
    for (size_t t = 0; t < 8; ++t) {
      const auto& x = sa.traces[tr].steps[t];
      const auto& y = sb.traces[tr].steps[t];
      CHECK(x.emission.tokens == y.emission.tokens);
      CHECK(x.reward == y.reward);
      CHECK(x.obs == y.obs);
      if (x.emission.tokens != sc.traces[tr].steps[t].emission.tokens) any_diff = true;

      // frozen rollout rows are normalized distributions over the vocab
      REQUIRE(x.old_dists.size() == x.emission.tokens.size() - 1);
      for (const auto& row : x.old_dists) {
        REQUIRE(row.size() == 8);
        double s = 0;
        for (double p : row) s += p;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
      }
      // chained observations within an episode
      if (t + 1 < 8 && !x.done) CHECK(x.next_obs == sa.traces[tr].steps[t + 1].obs);
    }
    if (sa.traces[tr].steps.back().done) CHECK(sa.traces[tr].bootstrap_value == 0.0);
  }
  CHECK(any_diff);  // a different master seed must change the stream
}

TEST_CASE("rollout: worker state snapshot restores the exact stream") {
  const auto cfg = tiny_config(Algo::vldac);
  policy::TokenPolicy pol(Vocabulary::for_kind(cfg.env.kind), cfg.env.obs_dims(), cfg.policy, 7);

  VecRollout a(cfg.env, 2, 5);
  (void)a.collect(pol, 6);
  std::stringstream snap;
  a.save(snap);

  VecRollout b(cfg.env, 2, 5);
  b.load(snap);
  Segment sa = a.collect(pol, 6);
  Segment sb = b.collect(pol, 6);
  for (size_t tr = 0; tr < 2; ++tr)
    for (size_t t = 0; t < 6; ++t) {
      CHECK(sa.traces[tr].steps[t].emission.tokens == sb.traces[tr].steps[t].emission.tokens);
      CHECK(sa.traces[tr].steps[t].obs == sb.traces[tr].steps[t].obs);
    }
}

TEST_CASE("rollout: replay groups share a start state and center their advantages") {
  const auto cfg = tiny_config(Algo::loop);
  policy::TokenPolicy pol(Vocabulary::for_kind(cfg.env.kind), cfg.env.obs_dims(), cfg.policy, 7);

  LoopRollout lr(cfg.env, 4, 0.99, 11);
  Segment seg = lr.collect(pol, 40);
  CHECK(seg.env_steps() >= 40);
  REQUIRE(seg.traces.size() % 4 == 0);
  CHECK(seg.episodes_done == static_cast<int>(seg.traces.size()));
  for (size_t g = 0; g < seg.traces.size(); g += 4) {
    double adv_sum = 0;
    for (size_t i = 0; i < 4; ++i) {
      CHECK(seg.traces[g + i].steps.front().obs == seg.traces[g].steps.front().obs);
      adv_sum += seg.traces[g + i].loop_advantage;
      CHECK(seg.traces[g + i].steps.back().done);
    }
    CHECK(adv_sum == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("trainer: value warm-up leaves the policy parameters bit-identical") {
  TrainConfig cfg = tiny_config(Algo::vldac);
  cfg.warmup_updates = 1;
  Trainer t(cfg);

  std::vector<std::vector<double>> pi_before;
  for (auto& [name, p] : t.policy().policy_params())
    pi_before.emplace_back(p.data().begin(), p.data().end());
  const std::string v_before = [&] {
    std::ostringstream os;
    std::vector<double> all;
    for (auto& [name, p] : t.policy().value_params())
      all.insert(all.end(), p.data().begin(), p.data().end());
    for (double x : all) os << x << ",";
    return os.str();
  }();

  const auto s1 = t.run_update();  // warm-up round: critic only
  CHECK(s1.loss_policy == 0.0);
  size_t idx = 0;
  for (auto& [name, p] : t.policy().policy_params()) {
    const auto d = p.data();
    REQUIRE(pi_before[idx].size() == d.size());
    for (size_t j = 0; j < d.size(); ++j) CHECK(d[j] == pi_before[idx][j]);
    ++idx;
  }
  const std::string v_after = [&] {
    std::ostringstream os;
    std::vector<double> all;
    for (auto& [name, p] : t.policy().value_params())
      all.insert(all.end(), p.data().begin(), p.data().end());
    for (double x : all) os << x << ",";
    return os.str();
  }();
  CHECK(v_after != v_before);  // the critic did move

  const auto s2 = t.run_update();  // past warm-up: policy moves now
  CHECK(s2.loss_policy != 0.0);
  bool pi_moved = false;
  idx = 0;
  for (auto& [name, p] : t.policy().policy_params()) {
    const auto d = p.data();
    for (size_t j = 0; j < d.size(); ++j) pi_moved = pi_moved || d[j] != pi_before[idx][j];
    ++idx;
  }
  CHECK(pi_moved);
}

TEST_CASE("trainer: identical configs produce identical updates and parameters") {
  const TrainConfig cfg = tiny_config(Algo::vldac);
  Trainer a(cfg), b(cfg);
  for (int u = 0; u < 3; ++u) {
    const auto sa = a.run_update();
    const auto sb = b.run_update();
    CHECK(Trainer::metrics_line(sa) == Trainer::metrics_line(sb));
  }
  CHECK(params_bytes(a.policy()) == params_bytes(b.policy()));
}

TEST_CASE("trainer: every algorithm completes updates with finite stats") {
  for (Algo algo : {Algo::vldac, Algo::rl4vlm, Algo::loop, Algo::td}) {
    CAPTURE(algo_name(algo));
    TrainConfig cfg = tiny_config(algo);
    Trainer t(cfg);
    const auto s1 = t.run_update();
    const auto s2 = t.run_update();
    for (const auto& s : {s1, s2}) {
      CHECK(std::isfinite(s.loss_policy));
      CHECK(std::isfinite(s.loss_value));
      CHECK(std::isfinite(s.loss_kl));
      CHECK(std::isfinite(s.grad_norm));
      CHECK(s.lr > 0);
      CHECK(s.parse_rate >= 0);
      CHECK(s.parse_rate <= 1);
    }
    CHECK(s2.env_steps >= 32);
    CHECK(s2.opt_steps > s1.opt_steps);
    if (algo == Algo::loop) {
      CHECK(s1.loss_value == 0.0);  // no critic in the leave-one-out path
    } else {
      CHECK(s1.loss_value != 0.0);
    }
    if (algo == Algo::vldac) {
      const auto s3 = t.run_update();  // first update past the critic warm-up
      CHECK(s3.loss_policy != 0.0);
      CHECK(s3.loss_kl != 0.0);
    }
  }
}

TEST_CASE("trainer: td target network trails the live value head") {
  TrainConfig cfg = tiny_config(Algo::td);
  Trainer t(cfg);
  (void)t.run_update();
  // after polyak mixing the target must differ from both zero-init and live
  // (the live head moved, the target moved tau of the way)
  auto live = t.policy().value_params();
  bool live_moved = false;
  for (auto& [name, p] : live)
    for (double x : p.data()) live_moved = live_moved || x != 0.0;
  CHECK(live_moved);
}

TEST_CASE("trainer: greedy evaluation is deterministic") {
  TrainConfig cfg = tiny_config(Algo::vldac);
  Trainer t(cfg);
  (void)t.run_update();
  std::ostringstream dump1, dump2;
  const auto e1 = t.evaluate(&dump1);
  const auto e2 = t.evaluate(&dump2);
  CHECK(e1.successes == e2.successes);
  CHECK(e1.return_sum == e2.return_sum);
  CHECK(e1.episodes == cfg.eval_episodes);
  CHECK(dump1.str() == dump2.str());
  CHECK(dump1.str().find("\"tokens\"") != std::string::npos);

  // each dumped line parses as JSON with the expected fields
  std::istringstream lines(dump1.str());
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("episode"));
    CHECK(j.contains("return"));
    CHECK(j.contains("success"));
    CHECK(j.contains("emissions"));
    rows += 1;
  }
  CHECK(rows == cfg.eval_episodes);
}

TEST_CASE("trainer: metrics lines carry nulls and eval fields correctly") {
  UpdateStats s;
  s.update = 3;
  s.env_steps = 48;
  s.opt_steps = 12;
  s.loss_policy = -0.25;
  s.train_episodes = 0;
  auto j = nlohmann::json::parse(Trainer::metrics_line(s));
  CHECK(j["update"] == 3);
  CHECK(j["train_sr"].is_null());
  CHECK(j["train_return"].is_null());
  CHECK_FALSE(j.contains("eval_sr"));

  s.train_episodes = 4;
  s.train_sr = 0.5;
  s.has_eval = true;
  s.eval_sr = 0.25;
  s.eval_return = -0.1;
  j = nlohmann::json::parse(Trainer::metrics_line(s));
  CHECK(j["train_sr"] == 0.5);
  CHECK(j["eval_sr"] == 0.25);
  CHECK(j["eval_return"] == -0.1);
}

TEST_CASE("trainer: kill and resume reproduces the uninterrupted run byte for byte") {
  for (Algo algo : {Algo::vldac, Algo::td}) {
    CAPTURE(algo_name(algo));
    const fs::path dirA = fresh_dir(std::string("vldac_resumeA_") + algo_name(algo));
    const fs::path dirB = fresh_dir(std::string("vldac_resumeB_") + algo_name(algo));

    TrainConfig cfgA = tiny_config(algo);
    cfgA.out_root = dirA.string();
    Trainer a(cfgA);
    a.run();
    CHECK(a.finished());
    CHECK(a.update_index() == 4);

    TrainConfig cfgB = tiny_config(algo);
    cfgB.out_root = dirB.string();
    Trainer b(cfgB);
    struct Kill {};
    try {
      // die after update 3's metrics line is on disk but before its checkpoint
      b.run([](const UpdateStats& s) {
        if (s.update == 3) throw Kill{};
      });
      FAIL("kill did not fire");
    } catch (const Kill&) {
    }

    auto resumed = Trainer::resume((dirB / b.config().run_name / "checkpoint.bin").string());
    CHECK(resumed->update_index() == 2);  // last checkpoint was at update 2
    CHECK(resumed->metrics_lines() == 2);
    resumed->run();
    CHECK(resumed->finished());

    const std::string runA = (dirA / a.config().run_name / "metrics.jsonl").string();
    const std::string runB = (dirB / b.config().run_name / "metrics.jsonl").string();
    CHECK(file_bytes(runA) == file_bytes(runB));
    CHECK(params_bytes(a.policy()) == params_bytes(resumed->policy()));

    fs::remove_all(dirA);
    fs::remove_all(dirB);
  }
}

TEST_CASE("trainer: resume rejects garbage and missing files") {
  CHECK_THROWS_AS(Trainer::resume("/nonexistent/checkpoint.bin"), IoError);
  const fs::path dir = fresh_dir("vldac_badckpt");
  const std::string path = (dir / "junk.bin").string();
  {
    std::ofstream os(path, std::ios::binary);
    os << "this is not a checkpoint at all";
  }
  CHECK_THROWS_AS(Trainer::resume(path), CheckpointError);
  fs::remove_all(dir);
}
