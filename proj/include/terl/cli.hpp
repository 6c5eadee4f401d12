#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "terl/compressibility.hpp"
#include "terl/config.hpp"
#include "terl/evalharness.hpp"
#include "terl/log.hpp"
#include "terl/report.hpp"
#include "terl/trainer.hpp"

namespace terl::cli {

namespace fs = std::filesystem;
using config::ConfigError;
using config::RunConfig;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kRuntime = 1, kConfig = 2 };

struct Globals {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<std::size_t> threads;
};

struct TrainArgs {
  std::optional<double> alpha;
  bool sac_mode = false;
  std::optional<std::string> env;
  std::optional<std::size_t> total_steps, initial_steps, eval_every, eval_episodes;
  std::optional<std::string> run_dir;
  bool overwrite = false;
};

struct PerturbArgs {
  std::optional<double> mass_scale, gravity_scale, action_noise, obs_noise;

  void apply(json& j) const {
    if (mass_scale) j["mass_scale"] = *mass_scale;
    if (gravity_scale) j["gravity_scale"] = *gravity_scale;
    if (action_noise) j["action_noise_sigma"] = *action_noise;
    if (obs_noise) j["obs_noise_sigma"] = *obs_noise;
  }
};

struct EvalArgs {
  std::string run_dir;
  std::optional<std::size_t> episodes;
  PerturbArgs perturb;
};

struct SweepArgs {
  std::vector<std::string> run_dirs;
  std::optional<std::string> axis;
  std::optional<std::vector<double>> levels;
  std::optional<std::size_t> episodes;
};

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

inline std::string read_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

inline json file_document(const Globals& g) {
  if (!g.config) return json::object();
  return config::read_json_file(*g.config);
}

inline void apply_globals(const Globals& g, json& j) {
  if (g.seed) j["seed"] = *g.seed;
  if (g.threads) j["threads"] = *g.threads;
}

/// File values, then flag overrides. An explicit --sac-mode without --alpha wins over a file alpha.
inline RunConfig train_config(const Globals& g, const TrainArgs& a) {
  json file = file_document(g);
  json over = json::object();
  apply_globals(g, over);
  if (a.alpha) over["alpha"] = *a.alpha;
  if (a.sac_mode) over["sac_mode"] = true;
  if (a.env) over["env"] = *a.env;
  if (a.total_steps) over["total_steps"] = *a.total_steps;
  if (a.initial_steps) over["initial_steps"] = *a.initial_steps;
  if (a.eval_every) over["eval_every"] = *a.eval_every;
  if (a.eval_episodes) over["eval_episodes"] = *a.eval_episodes;
  RunConfig cfg;
  config::merge(cfg, file);
  config::merge(cfg, over);
  const bool alpha_explicit = over.contains("alpha") || (file.contains("alpha") && !over.contains("sac_mode"));
  config::resolve(cfg, alpha_explicit);
  return cfg;
}

inline std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

inline bool non_empty_dir(const fs::path& p) { return fs::is_directory(p) && !fs::is_empty(p); }

inline fs::path choose_run_dir(const Globals& g, const TrainArgs& a, std::uint64_t seed) {
  if (a.run_dir) {
    fs::path dir(*a.run_dir);
    if (non_empty_dir(dir) && !a.overwrite) {
      throw ConfigError("run directory " + dir.string() + " already has contents; pass --overwrite to replace them");
    }
    return dir;
  }
  const fs::path base = fs::path(g.out) / ("run-" + std::to_string(seed) + "-" + utc_stamp());
  fs::path dir = base;
  for (int k = 1; fs::exists(dir); ++k) dir = fs::path(base.string() + "-" + std::to_string(k));
  return dir;
}

inline int cmd_train(const Globals& g, const TrainArgs& a) {
  RunConfig cfg = train_config(g, a);
  const fs::path dir = choose_run_dir(g, a, cfg.train.seed);
  ensure_dir(dir);
  write_text(dir / "resolved_config.json", config::to_json(cfg).dump(2) + "\n");
  log::get()->info("training {} on {} seed {} into {}", cfg.method_label(), cfg.train.env, cfg.train.seed,
                   dir.string());
  auto result = trainer::train(cfg.train, dir);
  std::cout << dir.string() << '\n';
  log::get()->info("done: {} critic updates, {} actor updates, final eval return {}", result.critic_updates,
                   result.actor_updates, result.rows.empty() ? 0.0 : result.rows.back().eval_return);
  return kOk;
}

inline RunConfig run_dir_config(const fs::path& dir) {
  const fs::path p = dir / "resolved_config.json";
  if (!fs::exists(p)) throw std::runtime_error("run directory has no resolved_config.json: " + dir.string());
  return config::load(p);
}

inline fs::path run_dir_checkpoint(const fs::path& dir) {
  const fs::path p = dir / "checkpoint.terl";
  if (!fs::exists(p)) throw std::runtime_error("missing checkpoint: " + p.string());
  return p;
}

inline int cmd_eval(const Globals& g, const EvalArgs& a) {
  const fs::path dir(a.run_dir);
  RunConfig cfg = run_dir_config(dir);
  json over = json::object();
  a.perturb.apply(over);
  if (a.episodes) over["eval_trajectories"] = *a.episodes;
  if (g.seed) over["eval_seed"] = *g.seed;
  config::merge(cfg, over);
  config::resolve(cfg, true);

  auto env = envs::make_env(cfg.train.env);
  auto snap = trainer::PolicySnapshot<trainer::Real>::load(run_dir_checkpoint(dir), env->action_bound(),
                                                           cfg.train.sac.log_std);
  auto res = trainer::evaluate(snap, cfg.train.env, cfg.eval_trajectories, cfg.perturb, cfg.eval_seed);
  for (auto& r : res.trajectories) {
    r.method = cfg.method_label();
    r.alpha = cfg.train.terl.alpha;
  }
  write_text(dir / "trajectories.trj", compress::round_serialize(res.trajectories));
  std::ostringstream csv;
  csv << "episode,return\n";
  for (std::size_t i = 0; i < res.returns.size(); ++i) csv << i << ',' << trainer::fmt_num(res.returns[i]) << '\n';
  write_text(dir / "eval.csv", csv.str());
  json settings = {{"eval_seed", cfg.eval_seed},
                   {"episodes", cfg.eval_trajectories},
                   {"mass_scale", cfg.perturb.mass_scale},
                   {"gravity_scale", cfg.perturb.gravity_scale},
                   {"action_noise_sigma", cfg.perturb.action_noise_sigma},
                   {"obs_noise_sigma", cfg.perturb.obs_noise_sigma}};
  write_text(dir / "eval_settings.json", settings.dump(2) + "\n");
  std::cout << "mean_return " << trainer::fmt_num(res.mean_return().value_or(0.0)) << '\n';
  return kOk;
}

inline int cmd_sweep(const Globals& g, const SweepArgs& a) {
  json file = file_document(g);
  json over = json::object();
  apply_globals(g, over);
  if (a.axis) over["sweep_axis"] = *a.axis;
  if (a.levels) over["sweep_levels"] = *a.levels;
  if (a.episodes) over["sweep_episodes"] = *a.episodes;
  RunConfig cfg;
  config::merge(cfg, file);
  config::merge(cfg, over);
  for (const auto& d : a.run_dirs) {
    RunConfig rc = run_dir_config(d);
    cfg.sweep_checkpoints.push_back({rc.method_label(), rc.train.seed, fs::path(d) / "checkpoint.terl"});
    cfg.train.env = rc.train.env;
  }
  config::resolve(cfg, file.contains("alpha"));

  harness::SweepSpec spec;
  spec.env = cfg.train.env;
  spec.checkpoints = cfg.sweep_checkpoints;
  spec.axis = cfg.sweep_axis;
  spec.levels = cfg.sweep_levels;
  spec.episodes = cfg.sweep_episodes;
  spec.eval_seed = cfg.eval_seed;
  spec.threads = cfg.threads;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  for (const auto& c : spec.checkpoints) {
    if (!fs::exists(c.path)) {
      throw std::runtime_error("missing checkpoint for method '" + c.method + "' seed " + std::to_string(c.seed) +
                               ": " + c.path.string());
    }
  }
  auto rep = harness::run_sweep(spec);
  const fs::path out(g.out);
  ensure_dir(out);
  write_text(out / "robustness.csv", report::robustness_csv(rep));
  write_text(out / "robustness_aggregate.csv", report::robustness_plot_csv(rep));
  write_text(out / "sweep_config.json", config::to_json(cfg).dump(2) + "\n");
  return kOk;
}

inline int cmd_compress(const Globals& g, const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty()) throw ConfigError("compress needs at least one run directory");
  std::vector<compress::CompressionInput> inputs;
  for (const auto& d : run_dirs) {
    RunConfig rc = run_dir_config(d);
    const fs::path trj = fs::path(d) / "trajectories.trj";
    if (!fs::exists(trj)) throw std::runtime_error("missing trajectories (run `terl eval` first): " + trj.string());
    std::string bytes = read_bytes(trj);
    compress::parse_trajectories(bytes);
    inputs.push_back({rc.method_label(), rc.train.seed, std::move(bytes)});
  }
  auto rep = compress::build_compression_report(inputs);
  const fs::path out(g.out);
  ensure_dir(out);
  write_text(out / "compression.csv", report::compression_csv(rep));
  write_text(out / "compression_summary.csv", report::compression_summary_csv(rep));
  std::cout << report::compression_summary_csv(rep);
  return kOk;
}

inline int cmd_report(const Globals& g, const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw ConfigError("report needs at least one CSV input");
  std::vector<report::CsvTable> tables;
  for (const auto& p : inputs) tables.push_back(report::read_csv(p));
  auto summary = report::summarize(tables);
  const fs::path out(g.out);
  ensure_dir(out);
  const std::string text = "# directional comparison on toy tasks; compare trends, not absolute scores\n" +
                           report::to_text(summary);
  write_text(out / "summary.csv", report::to_csv(summary));
  write_text(out / "summary.txt", text);
  std::cout << text;
  return kOk;
}

/// Parses argv and dispatches; returns the process exit code.
inline int run(int argc, char** argv) {
  CLI::App app{kTerlAvailable ? "terl: trajectory-entropy regularized soft actor-critic"
                              : "terl_sac_only: soft actor-critic (trajectory-entropy module excluded)"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--seed", g.seed, "random seed (train) or evaluation seed (eval)");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads for sweeps")->check(CLI::PositiveNumber);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train an agent into a fresh run directory");
  train->add_option("--alpha", ta.alpha, "trajectory-entropy coefficient (0 selects sac_mode)");
  train->add_flag("--sac-mode", ta.sac_mode, "plain soft actor-critic (alpha = 0, no encoder)");
  train->add_option("--env", ta.env, "pendulum or pointmass");
  train->add_option("--total-steps", ta.total_steps);
  train->add_option("--initial-steps", ta.initial_steps);
  train->add_option("--eval-every", ta.eval_every);
  train->add_option("--eval-episodes", ta.eval_episodes);
  train->add_option("--run-dir", ta.run_dir, "explicit run directory instead of <out>/run-<seed>-<timestamp>");
  train->add_flag("--overwrite", ta.overwrite, "allow reusing a non-empty --run-dir");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate a run's checkpoint and record trajectories");
  eval->add_option("run_dir", ea.run_dir)->required();
  eval->add_option("--episodes", ea.episodes);
  eval->add_option("--mass-scale", ea.perturb.mass_scale);
  eval->add_option("--gravity-scale", ea.perturb.gravity_scale);
  eval->add_option("--action-noise", ea.perturb.action_noise);
  eval->add_option("--obs-noise", ea.perturb.obs_noise);

  SweepArgs sa;
  auto* sweep = app.add_subcommand("sweep", "robustness sweep over one perturbation axis");
  sweep->add_option("run_dirs", sa.run_dirs, "run directories to include as checkpoints");
  sweep->add_option("--axis", sa.axis, "mass, action_noise or obs_noise");
  auto* levels_opt = sweep->add_option("--levels", sa.levels, "comma-separated levels")->delimiter(',');
  sweep->add_option("--episodes", sa.episodes);

  std::vector<std::string> compress_dirs;
  auto* comp = app.add_subcommand("compress", "compressed size of recorded trajectories");
  comp->add_option("run_dirs", compress_dirs);

  std::vector<std::string> report_inputs;
  auto* rep = app.add_subcommand("report", "mean and 90% CI over seeds for CSV inputs");
  rep->add_option("inputs", report_inputs);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  if (levels_opt->count() > 0 && !sa.levels) sa.levels.emplace();

  try {
    if (*train) return cmd_train(g, ta);
    if (*eval) return cmd_eval(g, ea);
    if (*sweep) return cmd_sweep(g, sa);
    if (*comp) return cmd_compress(g, compress_dirs);
    if (*rep) return cmd_report(g, report_inputs);
  } catch (const ConfigError& e) {
    log::get()->error("configuration error: {}", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    log::get()->error("{}", e.what());
    return kRuntime;
  }
  return kConfig;
}

}  // namespace terl::cli
