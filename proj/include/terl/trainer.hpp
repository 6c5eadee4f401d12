#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "terl/agent.hpp"
#include "terl/checkpoint.hpp"
#include "terl/compressibility.hpp"
#include "terl/envs.hpp"
#include "terl/log.hpp"
#include "terl/replay.hpp"
#include "terl/rng.hpp"

namespace terl::trainer {

using Real = float;

struct TrainConfig {
  std::string env = "pendulum";
  std::uint64_t seed = 0;
  std::size_t total_steps = 150'000;
  std::size_t initial_steps = 5'000;
  std::size_t batch_size = 256;
  std::size_t eval_every = 5'000;
  std::size_t eval_episodes = 10;
  std::size_t replay_capacity = replay::ReplayBuffer::kDefaultCapacity;
  sac::SacConfig sac;
  TerlSettings terl;
  envs::PerturbConfig train_perturb;

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
    if (total_steps < initial_steps) fail("total_steps must be >= initial_steps");
    if (batch_size == 0 || eval_every == 0 || replay_capacity == 0) fail("batch_size, eval_every and replay_capacity must be positive");
    if (initial_steps < batch_size) fail("initial_steps must be >= batch_size so the first update can sample a batch");
    if (sac.hidden == 0 || terl.latent_dim == 0) fail("network widths must be positive");
    if (!(sac.lr > 0.0) || !(terl.lr > 0.0)) fail("learning rates must be positive");
    if (!(sac.gamma > 0.0 && sac.gamma < 1.0)) fail("gamma must lie in (0, 1)");
    if (!(sac.ema_tau > 0.0 && sac.ema_tau <= 1.0)) fail("ema_tau must lie in (0, 1]");
    if (sac.actor_update_every == 0 || sac.target_update_every == 0) fail("update frequencies must be positive");
    if (!(sac.init_temperature > 0.0)) fail("init_temperature must be positive");
    if (terl.alpha < 0.0) fail("alpha must be >= 0");
    if (terl.sac_mode && terl.alpha != 0.0) fail("sac_mode requires alpha = 0");
    if (!(sac.log_std.lo < sac.log_std.hi)) fail("log-std bounds must satisfy lo < hi");
    train_perturb.validate();
    envs::make_env(env);
  }
};

/// Deterministic actor extracted from an agent or a checkpoint.
template <typename T>
struct PolicySnapshot {
  ndgrad::Mlp<T> policy;
  std::optional<ndgrad::Mlp<T>> encoder;
  ndgrad::LogStdBounds bounds;
  double action_bound = 1.0;

  static PolicySnapshot of(const AgentBundle<T>& agent, double action_bound) {
    PolicySnapshot s;
    s.policy = agent.policy.clone();
#ifndef TERL_EXCLUDE_TERL
    if (agent.terl) s.encoder = agent.terl->encoder.clone();
#endif
    s.bounds = agent.sac_cfg.log_std;
    s.action_bound = action_bound;
    return s;
  }

  static PolicySnapshot load(const std::filesystem::path& path, double action_bound,
                             ndgrad::LogStdBounds bounds = {}) {
    auto tensors = checkpoint::read<T>(path);
    auto pol = checkpoint::mlp_from(tensors, "policy", ndgrad::HeadKind::gaussian);
    if (!pol) throw checkpoint::CheckpointError("checkpoint has no policy tensors: " + path.string());
    PolicySnapshot s;
    s.policy = *pol;
    s.encoder = checkpoint::mlp_from(tensors, "encoder", ndgrad::HeadKind::plain);
    s.bounds = bounds;
    s.action_bound = action_bound;
    return s;
  }

  /// tanh(mean) action; fills the normalized action when requested.
  std::vector<double> act(const std::vector<double>& obs, std::vector<double>* normalized = nullptr) const {
    auto s = ndgrad::Tensor<T>::from({1, obs.size()}, std::vector<T>(obs.begin(), obs.end()));
    auto z = encoder ? encoder->forward(s) : s;
    Rng unused(0);
    return sac::act<T>(policy, z.data(), sac::ActMode::deterministic, bounds, unused, action_bound, normalized);
  }
};

struct EvalResult {
  std::vector<double> returns;
  std::vector<compress::TrajectoryRecord> trajectories;

  std::optional<double> mean_return() const {
    if (returns.empty()) return std::nullopt;
    double s = 0.0;
    for (double r : returns) s += r;
    return s / static_cast<double>(returns.size());
  }
};

/// Runs `episodes` deterministic episodes; episode i resets from a seed derived from (seed, i).
template <typename Actor>
EvalResult evaluate(const Actor& actor, const std::string& env_name, std::size_t episodes,
                    const envs::PerturbConfig& perturb, std::uint64_t seed) {
  perturb.validate();
  EvalResult out;
  auto env = envs::make_env(env_name);
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    Rng noise = make_rng(seed, Stream::eval_env_noise, ep);
    auto obs = env->reset(derive_seed(seed, Stream::eval_reset, ep));
    if (perturb.obs_noise_sigma > 0.0) {
      std::normal_distribution<double> n(0.0, perturb.obs_noise_sigma);
      for (auto& o : obs) o += n(noise);
    }
    compress::TrajectoryRecord rec;
    rec.state_dim = env->observation_dim();
    rec.action_dim = env->action_dim();
    rec.env = env_name;
    rec.seed = seed;
    double ret = 0.0;
    for (;;) {
      std::vector<double> normalized;
      auto action = actor.act(obs, &normalized);
      rec.append(obs, normalized);
      auto res = env->step(action, perturb, noise);
      ret += res.reward;
      obs = std::move(res.observation);
      if (res.done) break;
    }
    out.returns.push_back(ret);
    out.trajectories.push_back(std::move(rec));
  }
  return out;
}

struct MetricsRow {
  std::size_t step = 0;
  std::optional<double> train_return;
  double eval_return = 0.0;
  std::optional<double> critic_loss;
  std::optional<double> actor_objective;
  std::optional<double> upper_bound;
  double beta = 0.0;
  double wall_clock_s = 0.0;
};

inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_num(*v) : std::string(); }

inline const char* kMetricsHeader = "step,train_return,eval_return,critic_loss,actor_objective,upper_bound,beta";

inline std::string metrics_line(const MetricsRow& r) {
  return std::to_string(r.step) + "," + fmt_opt(r.train_return) + "," + fmt_num(r.eval_return) + "," +
         fmt_opt(r.critic_loss) + "," + fmt_opt(r.actor_objective) + "," + fmt_opt(r.upper_bound) + "," +
         fmt_num(r.beta);
}

struct TrainResult {
  std::vector<MetricsRow> rows;
  std::uint64_t critic_updates = 0;
  std::uint64_t actor_updates = 0;
  std::uint64_t ema_applications = 0;
  std::filesystem::path checkpoint;
};

/// Outer loop: warmup with uniform actions, then one gradient step per environment step,
/// evaluating and checkpointing every `eval_every` steps and at the end.
/// Writes metrics.csv, timing.csv and checkpoint.terl into `out_dir`.
inline TrainResult train(const TrainConfig& cfg, const std::filesystem::path& out_dir,
                         AgentBundle<Real>* agent_out = nullptr) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create run directory " + out_dir.string() + ": " + ec.message());

  auto env = envs::make_env(cfg.env);
  const std::size_t od = env->observation_dim(), ad = env->action_dim();
  const double bound = env->action_bound();
  auto agent = AgentBundle<Real>::create(od, ad, cfg.sac, cfg.terl, cfg.seed);

  replay::ReplayBuffer buffer(od, ad, cfg.replay_capacity);
  replay::EpisodeTracker tracker(ad);
  Rng warmup_rng = make_rng(cfg.seed, Stream::warmup_actions);
  Rng policy_rng = make_rng(cfg.seed, Stream::policy_noise);
  Rng replay_rng = make_rng(cfg.seed, Stream::replay);
  Rng env_noise = make_rng(cfg.seed, Stream::train_env_noise);
  const std::uint64_t eval_seed = derive_seed(cfg.seed, Stream::eval_reset);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);

  const auto metrics_path = out_dir / "metrics.csv";
  const auto timing_path = out_dir / "timing.csv";
  std::ofstream metrics(metrics_path, std::ios::binary | std::ios::trunc);
  std::ofstream timing(timing_path, std::ios::binary | std::ios::trunc);
  if (!metrics || !timing) throw std::runtime_error("cannot write metrics into " + out_dir.string());
  metrics << kMetricsHeader << '\n';
  timing << "step,wall_clock_s\n";

  TrainResult result;
  result.checkpoint = out_dir / "checkpoint.terl";
  const auto t0 = std::chrono::steady_clock::now();

  std::size_t episode = 0, step_in_episode = 0;
  auto obs = env->reset(derive_seed(cfg.seed, Stream::train_reset, episode));
  tracker.begin_episode();
  double episode_return = 0.0;
  std::optional<double> last_return;
  UpdateStats last_stats;
  bool updated = false;
  std::optional<double> last_actor, last_bound;

  for (std::size_t t = 0; t < cfg.total_steps; ++t) {
    std::vector<double> normalized(ad);
    std::vector<double> action(ad);
    if (t < cfg.initial_steps) {
      for (std::size_t i = 0; i < ad; ++i) {
        normalized[i] = uniform(warmup_rng);
        action[i] = normalized[i] * bound;
      }
    } else {
      auto s = ndgrad::Tensor<Real>::from({1, od}, std::vector<Real>(obs.begin(), obs.end()));
      auto z = agent.latent(s);
      action = sac::act<Real>(agent.policy, z.data(), sac::ActMode::stochastic, agent.sac_cfg.log_std, policy_rng,
                              bound, &normalized);
    }
    auto res = env->step(action, cfg.train_perturb, env_noise);
    episode_return += res.reward;

    std::vector<float> s_f(obs.begin(), obs.end()), a_f(normalized.begin(), normalized.end());
    std::vector<float> sn_f(res.observation.begin(), res.observation.end());
    for (auto& v : a_f) v = std::clamp(v, -1.0f, 1.0f);
    // Time-limit truncation is not a terminal state for bootstrapping.
    buffer.push(tracker.record(step_in_episode, std::move(s_f), std::move(a_f), static_cast<float>(res.reward),
                               std::move(sn_f), false));

    if (t >= cfg.initial_steps) {
      auto batch = buffer.sample(cfg.batch_size, replay_rng);
      last_stats = gradient_step(agent, batch, policy_rng);
      updated = true;
      if (last_stats.actor_objective) last_actor = last_stats.actor_objective;
      if (last_stats.upper_bound) last_bound = last_stats.upper_bound;
    }

    if (res.done) {
      last_return = episode_return;
      episode_return = 0.0;
      ++episode;
      step_in_episode = 0;
      obs = env->reset(derive_seed(cfg.seed, Stream::train_reset, episode));
      tracker.begin_episode();
    } else {
      obs = std::move(res.observation);
      ++step_in_episode;
    }

    const std::size_t done_steps = t + 1;
    if (done_steps % cfg.eval_every == 0 || done_steps == cfg.total_steps) {
      auto snap = PolicySnapshot<Real>::of(agent, bound);
      auto eval = evaluate(snap, cfg.env, cfg.eval_episodes, envs::PerturbConfig{}, eval_seed);
      MetricsRow row;
      row.step = done_steps;
      row.train_return = last_return;
      row.eval_return = eval.mean_return().value_or(0.0);
      if (updated) row.critic_loss = last_stats.critic_loss;
      row.actor_objective = last_actor;
      row.upper_bound = last_bound;
      row.beta = static_cast<double>(agent.temperature.beta());
      row.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      metrics << metrics_line(row) << '\n';
      metrics.flush();
      timing << row.step << ',' << fmt_num(row.wall_clock_s) << '\n';
      timing.flush();
      checkpoint::save_agent(result.checkpoint, agent);
      log::get()->info("[{} seed {}] step {} eval_return {:.2f} beta {:.4f}", cfg.env, cfg.seed, row.step,
                       row.eval_return, row.beta);
      result.rows.push_back(row);
    }
  }
  if (!metrics || !timing) throw std::runtime_error("failed writing metrics into " + out_dir.string());
  result.critic_updates = agent.critics.updates;
  result.actor_updates = agent.actor_updates;
  result.ema_applications = agent.critics.ema_applications;
  if (agent_out) *agent_out = std::move(agent);
  return result;
}

}  // namespace terl::trainer
