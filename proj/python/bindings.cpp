#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "vldac/algos/advantage.hpp"
#include "vldac/analysis.hpp"
#include "vldac/cli/expcli.hpp"
#include "vldac/envs/env.hpp"
#include "vldac/policy/policy.hpp"
#include "vldac/rng.hpp"
#include "vldac/train/trainer.hpp"

namespace py = pybind11;
using namespace vldac;

namespace {

EnvSpec spec_from_kwargs(const std::string& kind, const std::string& reward,
                         const std::string& layout, int horizon) {
  EnvSpec spec = EnvSpec::make(env_kind_from_name(kind));
  if (!reward.empty()) spec.reward = reward_scheme_from_name(reward);
  if (layout == "wall_gap") spec.layout = RoomsLayout::wall_gap;
  else if (!layout.empty() && layout != "one_room")
    throw SpecError("layout must be one_room or wall_gap");
  if (horizon > 0) spec.horizon = horizon;
  spec.resolve_defaults();
  spec.validate();
  return spec;
}

// Thin owner so Python sees one object with obs access baked in.
struct PyEnv {
  std::unique_ptr<Env> env;

  explicit PyEnv(const EnvSpec& spec) : env(make_env(spec)) {}

  std::vector<double> reset(std::uint64_t seed) { return env->reset(seed).frames_flat(); }

  py::dict step_tokens(const std::vector<int>& tokens) {
    const auto emission = wrap_action_tokens(tokens);
    const auto outcome = env->step(parse_action(emission, env->vocab(), env->spec().kind));
    py::dict d;
    d["obs"] = outcome.obs.frames_flat();
    d["reward"] = outcome.reward;
    d["done"] = outcome.done;
    d["success"] = outcome.success;
    d["parse_ok"] = outcome.parse_ok;
    return d;
  }

  std::vector<int> expert_action_tokens() const { return env->expert_action_tokens(); }
  const std::vector<std::string>& vocab_tokens() const { return env->vocab().tokens(); }
  bool done() const { return env->done(); }
  int time() const { return env->time(); }
};

train::TrainConfig config_from(const std::string& text,
                               const std::map<std::string, std::string>& overrides) {
  std::vector<std::pair<std::string, std::string>> ov(overrides.begin(), overrides.end());
  std::istringstream in(text);
  return train::parse_config(in, ov);
}

}  // namespace

PYBIND11_MODULE(_vldac, m) {
  m.doc() = "token-action RL training laboratory (C++ core)";

  py::register_exception<Error>(m, "VldacError");

  // ---- advantage estimation -------------------------------------------------
  m.def(
      "gae_advantages",
      [](const std::vector<double>& rewards, const std::vector<double>& values,
         const std::vector<bool>& dones, double bootstrap, double gamma, double lam) {
        std::vector<std::uint8_t> d8(dones.begin(), dones.end());
        const auto r = algos::gae_advantages(rewards, values, d8, bootstrap, {gamma, lam});
        return py::make_tuple(r.advantages, r.value_targets);
      },
      py::arg("rewards"), py::arg("values"), py::arg("dones"), py::arg("bootstrap") = 0.0,
      py::arg("gamma") = 0.99, py::arg("lam") = 0.95);
  m.def("leave_one_out_advantages",
        [](const std::vector<double>& returns) { return algos::leave_one_out_advantages(returns); },
        py::arg("returns"));

  // ---- environments ---------------------------------------------------------
  py::class_<PyEnv>(m, "Env")
      .def(py::init([](const std::string& kind, const std::string& reward,
                       const std::string& layout, int horizon) {
             return new PyEnv(spec_from_kwargs(kind, reward, layout, horizon));
           }),
           py::arg("kind"), py::arg("reward") = "", py::arg("layout") = "",
           py::arg("horizon") = 0)
      .def("reset", &PyEnv::reset, py::arg("seed"))
      .def("step_tokens", &PyEnv::step_tokens, py::arg("tokens"))
      .def("expert_action_tokens", &PyEnv::expert_action_tokens)
      .def("vocab_tokens", &PyEnv::vocab_tokens)
      .def_property_readonly("done", &PyEnv::done)
      .def_property_readonly("time", &PyEnv::time);

  m.def(
      "success_oracle",
      [](const std::string& kind, std::uint64_t seed, const std::string& reward,
         const std::string& layout, int horizon) {
        return success_oracle(spec_from_kwargs(kind, reward, layout, horizon), seed);
      },
      py::arg("kind"), py::arg("seed"), py::arg("reward") = "", py::arg("layout") = "",
      py::arg("horizon") = 0);

  // ---- training -------------------------------------------------------------
  m.def(
      "train_run",
      [](const std::string& config_text, const std::map<std::string, std::string>& overrides,
         bool quiet) {
        auto cfg = config_from(config_text, overrides);
        train::Trainer trainer(cfg);
        trainer.run([&](const train::UpdateStats& s) {
          if (!quiet)
            py::print("update", s.update, "env_steps", s.env_steps, "loss", s.loss_total);
        });
        py::dict d;
        d["out_dir"] = trainer.out_dir();
        d["run_name"] = trainer.config().run_name;
        d["updates"] = trainer.update_index();
        d["env_steps"] = trainer.env_steps();
        return d;
      },
      py::arg("config_text"), py::arg("overrides") = std::map<std::string, std::string>{},
      py::arg("quiet") = true);
  m.def(
      "resolve_config",
      [](const std::string& config_text, const std::map<std::string, std::string>& overrides) {
        auto cfg = config_from(config_text, overrides);
        cfg.resolve();
        cfg.validate();
        return train::dump_config(cfg);
      },
      py::arg("config_text"), py::arg("overrides") = std::map<std::string, std::string>{});

  // ---- command-line front end (the whole operator surface) ------------------
  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int rc = cli::expcli_main(args, out, err);
        return py::make_tuple(rc, out.str(), err.str());
      },
      py::arg("args"), "run a CLI subcommand in-process; returns (exit_code, stdout, stderr)");

  // ---- metrics analysis ------------------------------------------------------
  m.def("read_metric_series", [](const std::string& path, const std::string& key) {
    const auto s = analysis::read_metric_series(path, key);
    return py::make_tuple(s.steps, s.values);
  });
  m.def(
      "moving_average",
      [](const std::vector<double>& v, int window) { return analysis::moving_average(v, window); },
      py::arg("values"), py::arg("window"));
  m.def("summarize_curve", [](const std::vector<double>& v) {
    const auto s = analysis::summarize_curve(v);
    py::dict d;
    d["mean"] = s.mean;
    d["std"] = s.std_dev;
    d["final"] = s.final_value;
    d["max"] = s.max_value;
    d["points"] = s.points;
    return d;
  });
}
