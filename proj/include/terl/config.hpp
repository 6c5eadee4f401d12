#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "terl/evalharness.hpp"
#include "terl/trainer.hpp"

namespace terl::config {

using nlohmann::json;

/// Invalid or inconsistent configuration (maps to exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Everything one invocation needs. Serialized as a flat JSON object; see README for the schema.
struct RunConfig {
  trainer::TrainConfig train;
  std::string method;  // label used in reports; derived when empty
  bool perturb_training = false;
  envs::PerturbConfig perturb;  // evaluation-time perturbation for `eval`
  std::size_t eval_trajectories = 30;
  std::uint64_t eval_seed = 20240101;
  // sweep
  harness::Axis sweep_axis = harness::Axis::mass;
  std::vector<double> sweep_levels = harness::default_levels(harness::Axis::mass);
  std::size_t sweep_episodes = 30;
  std::vector<harness::CheckpointRef> sweep_checkpoints;
  std::size_t threads = 1;

  std::string method_label() const {
    if (!method.empty()) return method;
    if (train.terl.sac_mode) return "sac";
    std::ostringstream os;
    os << "terl-alpha-" << train.terl.alpha;
    return os.str();
  }
};

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "env", "seed", "total_steps", "initial_steps", "batch_size", "eval_every", "eval_episodes", "replay_capacity",
      "hidden_dim", "latent_dim", "alpha", "sac_mode", "gamma", "lr", "terl_lr", "ema_tau", "target_update_every",
      "actor_update_every", "init_temperature", "learn_temperature", "log_std_min", "log_std_max", "actor_entropy", "method",
      "perturb_training", "mass_scale", "gravity_scale", "action_noise_sigma", "obs_noise_sigma", "eval_trajectories",
      "eval_seed", "sweep_axis", "sweep_levels", "sweep_episodes", "sweep_checkpoints", "threads"};
  return keys;
}

namespace detail {

template <typename V>
void take(const json& j, const char* key, V& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace detail

/// Applies the keys present in `j` on top of `cfg`. Unknown keys are rejected.
inline void merge(RunConfig& cfg, const json& j) {
  if (!j.is_object()) throw ConfigError("config document must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (!known_keys().count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  auto& t = cfg.train;
  using detail::take;
  take(j, "env", t.env);
  take(j, "seed", t.seed);
  take(j, "total_steps", t.total_steps);
  take(j, "initial_steps", t.initial_steps);
  take(j, "batch_size", t.batch_size);
  take(j, "eval_every", t.eval_every);
  take(j, "eval_episodes", t.eval_episodes);
  take(j, "replay_capacity", t.replay_capacity);
  take(j, "hidden_dim", t.sac.hidden);
  take(j, "latent_dim", t.terl.latent_dim);
  take(j, "alpha", t.terl.alpha);
  take(j, "sac_mode", t.terl.sac_mode);
  take(j, "gamma", t.sac.gamma);
  take(j, "lr", t.sac.lr);
  take(j, "terl_lr", t.terl.lr);
  take(j, "ema_tau", t.sac.ema_tau);
  take(j, "target_update_every", t.sac.target_update_every);
  take(j, "actor_update_every", t.sac.actor_update_every);
  take(j, "init_temperature", t.sac.init_temperature);
  take(j, "learn_temperature", t.sac.learn_temperature);
  take(j, "log_std_min", t.sac.log_std.lo);
  take(j, "log_std_max", t.sac.log_std.hi);
  if (j.contains("actor_entropy")) {
    std::string mode;
    take(j, "actor_entropy", mode);
    if (mode == "sampled") {
      t.sac.actor_entropy = sac::EntropySample::sampled;
    } else if (mode == "replayed") {
      t.sac.actor_entropy = sac::EntropySample::replayed;
    } else {
      throw ConfigError("config key 'actor_entropy' must be \"sampled\" or \"replayed\"");
    }
  }
  take(j, "method", cfg.method);
  take(j, "perturb_training", cfg.perturb_training);
  take(j, "mass_scale", cfg.perturb.mass_scale);
  take(j, "gravity_scale", cfg.perturb.gravity_scale);
  take(j, "action_noise_sigma", cfg.perturb.action_noise_sigma);
  take(j, "obs_noise_sigma", cfg.perturb.obs_noise_sigma);
  take(j, "eval_trajectories", cfg.eval_trajectories);
  take(j, "eval_seed", cfg.eval_seed);
  if (j.contains("sweep_axis")) {
    std::string axis;
    take(j, "sweep_axis", axis);
    try {
      cfg.sweep_axis = harness::parse_axis(axis);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (!j.contains("sweep_levels")) cfg.sweep_levels = harness::default_levels(cfg.sweep_axis);
  }
  take(j, "sweep_levels", cfg.sweep_levels);
  take(j, "sweep_episodes", cfg.sweep_episodes);
  take(j, "threads", cfg.threads);
  if (j.contains("sweep_checkpoints")) {
    const auto& arr = j.at("sweep_checkpoints");
    if (!arr.is_array()) throw ConfigError("config key 'sweep_checkpoints' must be an array");
    cfg.sweep_checkpoints.clear();
    for (const auto& e : arr) {
      if (!e.is_object() || !e.contains("path") || !e.contains("method")) {
        throw ConfigError("each sweep checkpoint needs 'method', 'path' and optionally 'seed'");
      }
      harness::CheckpointRef ref;
      take(e, "method", ref.method);
      take(e, "seed", ref.seed);
      std::string p;
      take(e, "path", p);
      ref.path = p;
      cfg.sweep_checkpoints.push_back(ref);
    }
  }
}

/// Resolves alpha/sac_mode coupling and validates the result.
inline void resolve(RunConfig& cfg, bool alpha_explicit) {
  auto& terl = cfg.train.terl;
  if (!kTerlAvailable && !alpha_explicit) terl.sac_mode = true;
  if (terl.sac_mode) {
    if (alpha_explicit && terl.alpha != 0.0) throw ConfigError("sac_mode requires alpha = 0");
    terl.alpha = 0.0;
  }
  if (terl.alpha == 0.0) terl.sac_mode = true;
  if (!kTerlAvailable && !terl.sac_mode) {
    throw ConfigError("this build excludes the trajectory-entropy module; set alpha = 0 (sac_mode)");
  }
  if (cfg.perturb_training) cfg.train.train_perturb = cfg.perturb;
  try {
    cfg.train.validate();
    cfg.perturb.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (cfg.eval_trajectories == 0) throw ConfigError("eval_trajectories must be positive");
  if (cfg.sweep_episodes == 0) throw ConfigError("sweep_episodes must be positive");
  if (cfg.threads == 0) throw ConfigError("threads must be positive");
}

inline json to_json(const RunConfig& cfg) {
  const auto& t = cfg.train;
  json j;
  j["env"] = t.env;
  j["seed"] = t.seed;
  j["total_steps"] = t.total_steps;
  j["initial_steps"] = t.initial_steps;
  j["batch_size"] = t.batch_size;
  j["eval_every"] = t.eval_every;
  j["eval_episodes"] = t.eval_episodes;
  j["replay_capacity"] = t.replay_capacity;
  j["hidden_dim"] = t.sac.hidden;
  j["latent_dim"] = t.terl.latent_dim;
  j["alpha"] = t.terl.alpha;
  j["sac_mode"] = t.terl.sac_mode;
  j["gamma"] = t.sac.gamma;
  j["lr"] = t.sac.lr;
  j["terl_lr"] = t.terl.lr;
  j["ema_tau"] = t.sac.ema_tau;
  j["target_update_every"] = t.sac.target_update_every;
  j["actor_update_every"] = t.sac.actor_update_every;
  j["init_temperature"] = t.sac.init_temperature;
  j["learn_temperature"] = t.sac.learn_temperature;
  j["log_std_min"] = t.sac.log_std.lo;
  j["log_std_max"] = t.sac.log_std.hi;
  j["actor_entropy"] = t.sac.actor_entropy == sac::EntropySample::replayed ? "replayed" : "sampled";
  j["method"] = cfg.method_label();
  j["perturb_training"] = cfg.perturb_training;
  j["mass_scale"] = cfg.perturb.mass_scale;
  j["gravity_scale"] = cfg.perturb.gravity_scale;
  j["action_noise_sigma"] = cfg.perturb.action_noise_sigma;
  j["obs_noise_sigma"] = cfg.perturb.obs_noise_sigma;
  j["eval_trajectories"] = cfg.eval_trajectories;
  j["eval_seed"] = cfg.eval_seed;
  j["sweep_axis"] = harness::axis_name(cfg.sweep_axis);
  j["sweep_levels"] = cfg.sweep_levels;
  j["sweep_episodes"] = cfg.sweep_episodes;
  json refs = json::array();
  for (const auto& r : cfg.sweep_checkpoints) refs.push_back({{"method", r.method}, {"seed", r.seed}, {"path", r.path.string()}});
  j["sweep_checkpoints"] = refs;
  j["threads"] = cfg.threads;
  return j;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

/// Loads a config document (e.g. a resolved_config.json) and resolves it.
inline RunConfig load(const std::filesystem::path& path) {
  RunConfig cfg;
  const json j = read_json_file(path);
  merge(cfg, j);
  resolve(cfg, j.contains("alpha"));
  return cfg;
}

}  // namespace terl::config
