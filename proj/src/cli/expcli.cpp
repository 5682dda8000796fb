#include "vldac/cli/expcli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "vldac/algos/losses.hpp"
#include "vldac/analysis.hpp"
#include "vldac/diff/gradcheck.hpp"
#include "vldac/errors.hpp"
#include "vldac/train/trainer.hpp"

namespace vldac::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::pair<std::string, std::string>> split_overrides(
    const std::vector<std::string>& raw) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& item : raw) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override must look like key=value, got '" + item + "'");
    out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(csv);
  while (std::getline(in, cur, ',')) {
    // trim
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

std::string sanitize_for_path(const std::string& s) {
  std::string out;
  for (char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_')
               ? c
               : '-';
  return out;
}

std::string metrics_file_for(const std::string& run) {
  if (run.size() > 6 && run.substr(run.size() - 6) == ".jsonl") return run;
  return run + "/metrics.jsonl";
}

void check_policy_env_compat(const policy::TokenPolicy& pol, const EnvSpec& spec) {
  if (!(pol.obs_dims() == spec.obs_dims()))
    throw SpecError("checkpoint policy expects a different observation shape than env '" +
                    std::string(env_kind_name(spec.kind)) + "'");
  if (!(Vocabulary::for_kind(spec.kind) == pol.vocab()))
    throw SpecError("checkpoint policy vocabulary does not match env '" +
                    std::string(env_kind_name(spec.kind)) + "'");
}

void print_progress(const train::UpdateStats& s, std::ostream& out) {
  out << "update=" << s.update << " env_steps=" << s.env_steps << " loss=" << s.loss_total
      << " policy=" << s.loss_policy << " kl=" << s.loss_kl << " value=" << s.loss_value
      << " grad_norm=" << s.grad_norm << " lr=" << s.lr << " parse=" << s.parse_rate;
  if (s.train_episodes > 0) out << " train_sr=" << s.train_sr;
  if (s.has_eval) out << " eval_sr=" << s.eval_sr << " eval_return=" << s.eval_return;
  out << "\n";
}

int cmd_train(const std::string& cfg_path, const std::vector<std::string>& raw_overrides,
              bool resume, bool quiet, std::ostream& out) {
  const auto cfg = train::parse_config_file(cfg_path, split_overrides(raw_overrides));
  auto trainer = std::make_unique<train::Trainer>(cfg);
  if (resume && fs::exists(trainer->checkpoint_path())) {
    const std::string ckpt = trainer->checkpoint_path();
    trainer = train::Trainer::resume(ckpt);
    if (!quiet) out << "resumed from " << ckpt << " at update " << trainer->update_index() << "\n";
  }
  double final_eval_sr = -1.0;
  trainer->run([&](const train::UpdateStats& s) {
    if (s.has_eval) final_eval_sr = s.eval_sr;
    if (!quiet) print_progress(s, out);
  });
  json summary = {{"run", trainer->config().run_name},
                  {"out_dir", trainer->out_dir()},
                  {"env_steps", trainer->env_steps()},
                  {"updates", trainer->update_index()},
                  {"final_eval_sr", final_eval_sr}};
  out << summary.dump() << "\n";
  return 0;
}

struct GroupData {
  std::vector<analysis::MetricSeries> series;
  std::vector<std::string> names;
};

GroupData load_group(const std::string& csv, const std::string& metric) {
  GroupData g;
  for (const auto& run : split_csv(csv)) {
    g.series.push_back(analysis::read_metric_series(metrics_file_for(run), metric));
    g.names.push_back(run);
  }
  if (g.series.empty()) throw ConfigError("empty run group: '" + csv + "'");
  return g;
}

int cmd_eval(const std::string& ckpt, int episodes, const std::string& env_kind,
             const std::string& reward, const std::string& layout, int horizon,
             std::uint64_t seed, bool seed_given, const std::string& dump_path,
             std::ostream& out) {
  auto trainer = train::Trainer::resume(ckpt);
  EnvSpec spec = trainer->config().env;
  if (!env_kind.empty()) {
    const EnvKind kind = env_kind_from_name(env_kind);
    if (kind != spec.kind) {
      spec.kind = kind;
      spec.horizon = 0;  // pick up the new kind's default
    }
  }
  if (!reward.empty()) spec.reward = reward_scheme_from_name(reward);
  if (!layout.empty()) {
    if (layout == "one_room") spec.layout = RoomsLayout::one_room;
    else if (layout == "wall_gap") spec.layout = RoomsLayout::wall_gap;
    else throw ConfigError("layout must be one_room or wall_gap, got '" + layout + "'");
  }
  if (horizon > 0) spec.horizon = horizon;
  spec.resolve_defaults();
  spec.validate();
  check_policy_env_compat(trainer->policy(), spec);

  const int n = episodes > 0 ? episodes : trainer->config().eval_episodes;
  const std::uint64_t eval_seed = seed_given ? seed : trainer->config().seed;

  std::ofstream dump;
  std::ostream* dump_ptr = nullptr;
  if (!dump_path.empty()) {
    dump.open(dump_path, std::ios::trunc);
    if (!dump) throw IoError("cannot open trajectory dump: " + dump_path);
    dump_ptr = &dump;
  }
  const auto res = train::greedy_eval(trainer->policy(), spec, eval_seed, n, dump_ptr);
  json j = {{"checkpoint", ckpt},
            {"env", env_kind_name(spec.kind)},
            {"reward", reward_scheme_name(spec.reward)},
            {"episodes", res.episodes},
            {"success_rate", res.success_rate()},
            {"mean_return", res.mean_return()},
            {"seed", eval_seed}};
  out << j.dump() << "\n";
  return 0;
}

struct Manifest {
  std::string base;
  std::vector<std::pair<std::string, std::string>> fixed;               // [set]
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;   // [sweep]
};

Manifest parse_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open sweep manifest: " + path);
  Manifest m;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto pos = line.find_first_of("#;"); pos != std::string::npos) line.erase(pos);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("manifest line " + std::to_string(lineno) + ": unterminated section");
      section = line.substr(1, line.size() - 2);
      if (section != "sweep" && section != "set")
        throw ConfigError("manifest section must be [sweep] or [set], got [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("manifest line " + std::to_string(lineno) + ": expected key = value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto tb = s.find_first_not_of(" \t");
      const auto te = s.find_last_not_of(" \t");
      s = tb == std::string::npos ? "" : s.substr(tb, te - tb + 1);
    };
    trim(key);
    trim(value);
    if (section.empty()) {
      if (key != "base")
        throw ConfigError("manifest line " + std::to_string(lineno) +
                          ": only 'base' may appear before [set]/[sweep]");
      m.base = value;
    } else if (section == "set") {
      m.fixed.emplace_back(key, value);
    } else {
      auto values = split_csv(value);
      if (values.empty())
        throw ConfigError("manifest key '" + key + "' has no values");
      m.axes.emplace_back(key, std::move(values));
    }
  }
  if (m.base.empty()) throw ConfigError("sweep manifest needs a 'base = <config.ini>' line");
  return m;
}

int cmd_sweep(const std::string& manifest_path, bool dry_run, bool quiet, std::ostream& out) {
  const Manifest m = parse_manifest(manifest_path);
  fs::path base_path(m.base);
  if (base_path.is_relative()) base_path = fs::path(manifest_path).parent_path() / base_path;

  // enumerate the cross product (last axis fastest) up front
  struct Cell {
    train::TrainConfig cfg;
    std::vector<std::pair<std::string, std::string>> overrides;
    std::string group;  // cell identity with the seed axis removed
  };
  std::vector<Cell> cells;
  std::vector<size_t> idx(m.axes.size(), 0);
  while (true) {
    Cell cell;
    cell.overrides = m.fixed;
    std::string suffix, group_suffix;
    for (size_t a = 0; a < m.axes.size(); ++a) {
      const auto& [key, values] = m.axes[a];
      cell.overrides.emplace_back(key, values[idx[a]]);
      const std::string part =
          "__" + sanitize_for_path(key) + "=" + sanitize_for_path(values[idx[a]]);
      suffix += part;
      if (key != "seed") group_suffix += part;
    }
    cell.cfg = train::parse_config_file(base_path.string(), cell.overrides);
    cell.cfg.run_name += suffix;
    cell.group = std::string(train::algo_name(cell.cfg.algo)) + "_" +
                 env_kind_name(cell.cfg.env.kind) + group_suffix;
    cells.push_back(std::move(cell));

    bool carry = true;
    for (size_t a = m.axes.size(); a-- > 0;) {
      if (++idx[a] < m.axes[a].second.size()) {
        carry = false;
        break;
      }
      idx[a] = 0;
    }
    if (carry) break;
  }
  for (size_t i = 0; i < cells.size(); ++i)
    for (size_t j = i + 1; j < cells.size(); ++j)
      if (cells[i].cfg.run_name == cells[j].cfg.run_name)
        throw ConfigError("sweep produces duplicate run name '" + cells[i].cfg.run_name + "'");

  if (dry_run) {
    for (const auto& cell : cells) {
      json row = {{"run", cell.cfg.run_name}, {"group", cell.group}, {"overrides", json::object()}};
      for (const auto& [k, v] : cell.overrides) row["overrides"][k] = v;
      out << row.dump() << "\n";
    }
    if (!quiet) out << "planned " << cells.size() << " runs\n";
    return 0;
  }

  // run every cell; a single cell failing is recorded and the sweep continues
  std::vector<std::string> group_order;
  std::map<std::string, std::vector<double>> group_finals;
  int failures = 0;
  for (const auto& cell : cells) {
    if (!quiet) out << "=== " << cell.cfg.run_name << "\n";
    try {
      train::Trainer trainer(cell.cfg);
      double final_eval_sr = -1.0;
      trainer.run([&](const train::UpdateStats& s) {
        if (s.has_eval) final_eval_sr = s.eval_sr;
      });
      json row = {{"run", cell.cfg.run_name},
                  {"out_dir", trainer.out_dir()},
                  {"final_eval_sr", final_eval_sr}};
      out << row.dump() << "\n";
      if (!group_finals.count(cell.group)) group_order.push_back(cell.group);
      group_finals[cell.group].push_back(final_eval_sr);
    } catch (const std::exception& e) {
      json row = {{"run", cell.cfg.run_name}, {"error", e.what()}};
      out << row.dump() << "\n";
      failures += 1;
    }
  }

  // mean +/- std of final SR per cell group, seeds collapsed
  for (const auto& group : group_order) {
    const auto s = analysis::summarize_curve(group_finals[group]);
    json row = {{"cell", group},
                {"n", s.points},
                {"final_sr_mean", s.mean},
                {"final_sr_std", s.std_dev}};
    out << row.dump() << "\n";
  }
  return failures == 0 ? 0 : 1;
}

int cmd_plot_data(const std::vector<std::string>& groups, std::vector<std::string> labels,
                  const std::string& metric, int window, const std::string& out_dir,
                  std::ostream& out) {
  if (labels.empty())
    for (const auto& g : groups) labels.push_back(sanitize_for_path(g));
  if (labels.size() != groups.size())
    throw ConfigError("--label count must match the number of run groups");
  for (size_t i = 0; i < labels.size(); ++i)
    for (size_t j = i + 1; j < labels.size(); ++j)
      if (labels[i] == labels[j]) throw ConfigError("duplicate group label '" + labels[i] + "'");

  fs::create_directories(out_dir);
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    const auto g = load_group(groups[gi], metric);
    const auto curve = analysis::aggregate_group(g.series, g.names, window);
    const fs::path file = fs::path(out_dir) / (sanitize_for_path(labels[gi]) + ".tsv");
    std::ofstream f(file, std::ios::trunc);
    if (!f) throw IoError("cannot write " + file.string());
    f << "# metric=" << metric << " runs=" << curve.runs << " window=" << window
      << " (trailing mean per run, then per-point mean/std across runs; population std)\n";
    f << "env_steps\tmean\tstd\n";
    for (int i = 0; i < curve.points(); ++i)
      f << curve.steps[static_cast<size_t>(i)] << "\t" << curve.mean[static_cast<size_t>(i)]
        << "\t" << curve.std_dev[static_cast<size_t>(i)] << "\n";
    json row = {{"group", labels[gi]},   {"file", file.string()},
                {"runs", curve.runs},    {"points", curve.points()},
                {"metric", metric},      {"window", window},
                {"final_mean", curve.final_mean}, {"final_std", curve.final_std}};
    out << row.dump() << "\n";
  }
  return 0;
}

int cmd_compare(const std::string& group_a, const std::string& group_b, const std::string& metric,
                int window, std::ostream& out) {
  const auto ga = load_group(group_a, metric);
  const auto gb = load_group(group_b, metric);
  const auto cmp = analysis::compare_curves(ga.series, ga.names, gb.series, gb.names, window);
  json j = {{"metric", metric},
            {"window", window},
            {"a",
             {{"runs", ga.names},
              {"n", cmp.a.runs},
              {"final_mean", cmp.a.final_mean},
              {"final_std", cmp.a.final_std}}},
            {"b",
             {{"runs", gb.names},
              {"n", cmp.b.runs},
              {"final_mean", cmp.b.final_mean},
              {"final_std", cmp.b.final_std}}},
            {"final_diff", cmp.final_diff},
            {"pooled_std", cmp.pooled_std},
            {"a_ge_b_last_quartile", cmp.a_ge_b_last_quartile},
            {"quartile_points", cmp.quartile_points}};
  if (cmp.t_valid)
    j["welch_t"] = cmp.welch_t;
  else
    j["welch_t"] = nullptr;
  out << j.dump() << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& env_kind, std::uint64_t seed, double h, double tol,
                  std::ostream& out) {
  const EnvSpec spec = EnvSpec::make(env_kind_from_name(env_kind));
  auto env = make_env(spec);

  policy::PolicyConfig pcfg;
  pcfg.feature_dim = 10;
  pcfg.backbone_hidden = 8;
  pcfg.ctx_embed = 4;
  pcfg.tok_embed = 6;
  pcfg.head_hidden = 8;
  pcfg.value_hidden = 6;
  pcfg.max_tokens = 6;
  pcfg.stop_grad_value = false;  // the check needs gradients through every path
  policy::TokenPolicy pol(env->vocab(), spec.obs_dims(), pcfg, derive_seed(seed, {0x6763}));

  // give the zero-init output layers some signal so nothing is trivially flat
  Rng noise(derive_seed(seed, {0x6E7A}));
  for (auto& [name, t] : pol.all_params())
    if (name == "pi.W_o" || name == "pi.b_o" || name == "v.W_v2" || name == "v.b_v2")
      for (auto& v : t.raw_data()) v = (noise.uniform() * 2 - 1) * 0.3;

  // freeze a few rollout steps: sampled emissions, old rows, advantages
  struct Frozen {
    Observation obs;
    std::vector<int> tokens;
    std::vector<std::vector<double>> old_dists;
    double advantage;
    double value_target;
  };
  std::vector<Frozen> steps;
  {
    diff::NoGradGuard guard;
    Rng rng(derive_seed(seed, {0x726F}));
    Observation obs = env->reset(derive_seed(seed, {0x6570}));
    for (int t = 0; t < 3; ++t) {
      const auto em = pol.sample_action(obs, rng);
      const auto scored = pol.score_sequence(obs, em.tokens);
      steps.push_back({obs, em.tokens, scored.dist_values(), rng.uniform() * 2 - 1,
                       rng.uniform() * 2 - 1});
      const auto outc = env->step(parse_action(em, env->vocab(), spec.kind));
      obs = env->done() ? env->reset(derive_seed(seed, {0x6570, static_cast<std::uint64_t>(t)}))
                        : outc.obs;
    }
  }

  // composite objective exercising every loss path the updaters use
  auto loss_fn = [&]() {
    diff::Tensor acc;
    for (size_t s = 0; s < steps.size(); ++s) {
      const auto& f = steps[s];
      const auto scored = pol.score_sequence(f.obs, f.tokens);
      std::vector<diff::Tensor> gathered;
      std::vector<double> old_probs;
      for (int i = 0; i < scored.positions(); ++i) {
        const int tok = f.tokens[static_cast<size_t>(i) + 1];
        gathered.push_back(diff::gather_index(scored.dist_rows[static_cast<size_t>(i)], {tok}));
        old_probs.push_back(f.old_dists[static_cast<size_t>(i)][static_cast<size_t>(tok)]);
      }
      auto pl = algos::token_clip_step_loss(gathered, old_probs, f.advantage, 0.2);
      auto kl = algos::kl_penalty(scored.dist_rows, f.old_dists);
      auto vl = algos::value_step_loss(scored.value, f.value_target);
      auto item = algos::total_loss(pl, kl, vl, 0.05, 0.15);
      acc = s == 0 ? item : diff::add(acc, item);
    }
    return diff::scale(acc, 1.0 / static_cast<double>(steps.size()));
  };

  const auto report = diff::finite_diff_check(loss_fn, pol.all_params(), h, tol);
  for (const auto& entry : report.worst)
    out << (entry.rel_err <= tol ? "ok   " : "FAIL ") << entry.name << "[" << entry.index
        << "] analytic=" << entry.analytic << " numeric=" << entry.numeric
        << " rel_err=" << entry.rel_err << "\n";
  out << (report.passed ? "PASS" : "FAIL") << " max_rel_err=" << report.max_rel_err
      << " tol=" << tol << "\n";
  return report.passed ? 0 : 1;
}

}  // namespace

int expcli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"desk-scale laboratory for token-action RL training"};
  app.name("vldac");

  std::string cfg_path;
  std::vector<std::string> overrides;
  bool resume = false, quiet = false;
  auto* train_cmd = app.add_subcommand("train", "train from a config file");
  train_cmd->add_option("config", cfg_path, "key=value config file")->required();
  train_cmd->add_option("-O,--override", overrides, "config overrides (key=value)");
  train_cmd->add_flag("--resume", resume, "continue from the run's checkpoint if present");
  train_cmd->add_flag("--quiet", quiet, "suppress per-update progress");

  std::string ckpt_path, eval_env, eval_reward, eval_layout, dump_path;
  int episodes = 0, eval_horizon = 0;
  std::uint64_t eval_seed = 0;
  auto* eval_cmd = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
  eval_cmd->add_option("checkpoint", ckpt_path, "trainer checkpoint file")->required();
  eval_cmd->add_option("env", eval_env, "env kind (default: the checkpoint's)");
  eval_cmd->add_option("--episodes", episodes, "episode count (default: config value)");
  eval_cmd->add_option("--reward", eval_reward, "sparse_terminal or shaped");
  eval_cmd->add_option("--layout", eval_layout, "one_room or wall_gap");
  eval_cmd->add_option("--horizon", eval_horizon, "episode step cap");
  auto* seed_opt = eval_cmd->add_option("--seed", eval_seed, "evaluation seed");
  eval_cmd->add_option("--dump", dump_path, "write episode trajectories (JSONL) here");

  std::string manifest_path;
  bool dry_run = false, sweep_quiet = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "run a grid of configs from a manifest");
  sweep_cmd->add_option("manifest", manifest_path, "sweep manifest file")->required();
  sweep_cmd->add_flag("--dry-run", dry_run, "list planned runs without training");
  sweep_cmd->add_flag("--quiet", sweep_quiet, "suppress per-run headers");

  std::vector<std::string> plot_groups, plot_labels;
  std::string metric = "eval_sr", plot_out = "plot_data";
  int window = 1;
  auto* plot_cmd = app.add_subcommand("plot-data", "write per-group mean/std curve files");
  plot_cmd->add_option("groups", plot_groups, "run groups (comma-joined run dirs)")->required();
  plot_cmd->add_option("--label", plot_labels, "one label per group (default: group arg)");
  plot_cmd->add_option("--metric", metric, "metric key (default eval_sr)");
  plot_cmd->add_option("--window", window, "trailing moving-average window");
  plot_cmd->add_option("--out", plot_out, "directory for the .tsv files");

  std::string group_a, group_b, cmp_metric = "eval_sr";
  int cmp_window = 1;
  auto* compare_cmd = app.add_subcommand("compare", "compare final metrics of two run groups");
  compare_cmd->add_option("group_a", group_a, "comma-separated run dirs")->required();
  compare_cmd->add_option("group_b", group_b, "comma-separated run dirs")->required();
  compare_cmd->add_option("--metric", cmp_metric, "metric key (default eval_sr)");
  compare_cmd->add_option("--window", cmp_window, "trailing moving-average window");

  std::string gc_env = "hallway_nav";
  std::uint64_t gc_seed = 1;
  double gc_h = 1e-5, gc_tol = 1e-4;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of the training graph");
  gc_cmd->add_option("--env", gc_env, "env kind (default hallway_nav)");
  gc_cmd->add_option("--seed", gc_seed, "randomization seed");
  gc_cmd->add_option("--step", gc_h, "finite-difference step");
  gc_cmd->add_option("--tol", gc_tol, "relative error tolerance");

  app.require_subcommand(1);

  std::vector<const char*> argv;
  argv.push_back("vldac");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(cfg_path, overrides, resume, quiet, out);
    if (*eval_cmd)
      return cmd_eval(ckpt_path, episodes, eval_env, eval_reward, eval_layout, eval_horizon,
                      eval_seed, seed_opt->count() > 0, dump_path, out);
    if (*sweep_cmd) return cmd_sweep(manifest_path, dry_run, sweep_quiet, out);
    if (*plot_cmd) return cmd_plot_data(plot_groups, plot_labels, metric, window, plot_out, out);
    if (*compare_cmd) return cmd_compare(group_a, group_b, cmp_metric, cmp_window, out);
    if (*gc_cmd) return cmd_gradcheck(gc_env, gc_seed, gc_h, gc_tol, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const SpecError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << "no subcommand given\n";
  return 2;
}

}  // namespace vldac::cli
