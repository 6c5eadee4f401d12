#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "terl/envs.hpp"
#include "terl/trainer.hpp"

namespace terl::harness {

/// z-score of a two-sided 90% normal interval.
inline constexpr double kZ90 = 1.6448536269514722;

/// Ratio of two returns such that 1 means "as good as the reference" and smaller means worse.
/// Positive returns compare as value/reference; cost-valued (negative) returns as reference/value.
inline std::optional<double> score_ratio(double value, double reference) {
  if (reference > 0.0) return value / reference;
  if (reference < 0.0 && value != 0.0) return reference / value;
  return std::nullopt;
}

/// 100 * perturbed / clean for positive returns; undefined when the clean mean is 0.
/// Cost-valued returns use 100 * clean / perturbed, consistent with score_ratio.
inline std::optional<double> drop_percentage(double perturbed_mean, double clean_mean) {
  if (clean_mean > 0.0) return 100.0 * perturbed_mean / clean_mean;
  if (clean_mean < 0.0 && perturbed_mean != 0.0) return 100.0 * clean_mean / perturbed_mean;
  return std::nullopt;
}

struct MeanCi {
  double mean = 0.0;
  double ci90 = 0.0;  // half-width; 0 when n < 2
  std::size_t n = 0;
};

/// Mean and 90% normal-approximation half-width (sample standard deviation / sqrt(n)).
inline MeanCi mean_ci90(const std::vector<double>& values) {
  MeanCi out;
  out.n = values.size();
  if (values.empty()) return out;
  double s = 0.0;
  for (double v : values) s += v;
  out.mean = s / static_cast<double>(out.n);
  if (out.n < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  const double sd = std::sqrt(ss / static_cast<double>(out.n - 1));
  out.ci90 = kZ90 * sd / std::sqrt(static_cast<double>(out.n));
  return out;
}

/// Raw per-seed returns: task -> method -> seeds.
using RawScores = std::map<std::string, std::map<std::string, std::vector<double>>>;

struct NormalizedScores {
  /// task -> method -> per-seed normalized scores
  std::map<std::string, std::map<std::string, std::vector<double>>> per_task;
  /// method -> mean over tasks and seeds
  std::map<std::string, MeanCi> aggregate;
};

/// Divides every score by the best method mean on its task, then pools tasks and seeds per method.
inline NormalizedScores normalize_scores(const RawScores& raw) {
  NormalizedScores out;
  std::map<std::string, std::vector<double>> pooled;
  for (const auto& [task, methods] : raw) {
    if (methods.empty()) throw std::invalid_argument("normalize_scores: task '" + task + "' has no methods");
    std::optional<double> best;
    for (const auto& [m, seeds] : methods) {
      if (seeds.empty()) throw std::invalid_argument("normalize_scores: method '" + m + "' has no scores");
      double s = 0.0;
      for (double v : seeds) s += v;
      const double mean = s / static_cast<double>(seeds.size());
      if (!best || mean > *best) best = mean;
    }
    for (const auto& [m, seeds] : methods) {
      auto& dst = out.per_task[task][m];
      for (double v : seeds) {
        auto r = score_ratio(v, *best);
        if (!r) throw std::invalid_argument("normalize_scores: best mean of task '" + task + "' is zero");
        dst.push_back(*r);
        pooled[m].push_back(*r);
      }
    }
  }
  for (const auto& [m, v] : pooled) out.aggregate[m] = mean_ci90(v);
  return out;
}

enum class Axis { mass, action_noise, obs_noise };

inline std::string axis_name(Axis a) {
  switch (a) {
    case Axis::mass: return "mass";
    case Axis::action_noise: return "action_noise";
    case Axis::obs_noise: return "obs_noise";
  }
  return "?";
}

inline Axis parse_axis(const std::string& s) {
  if (s == "mass") return Axis::mass;
  if (s == "action_noise") return Axis::action_noise;
  if (s == "obs_noise") return Axis::obs_noise;
  throw std::invalid_argument("unknown sweep axis '" + s + "' (expected mass, action_noise or obs_noise)");
}

inline std::vector<double> default_levels(Axis a) {
  switch (a) {
    case Axis::mass: return {0.5, 0.75, 1.25, 1.5};
    case Axis::action_noise: return {0.05, 0.1, 0.15, 0.2, 0.25, 0.3};
    case Axis::obs_noise: return {0.02, 0.04, 0.06, 0.08, 0.10};
  }
  return {};
}

inline envs::PerturbConfig perturb_for(Axis a, double level) {
  envs::PerturbConfig p;
  switch (a) {
    case Axis::mass: p.mass_scale = level; break;
    case Axis::action_noise: p.action_noise_sigma = level; break;
    case Axis::obs_noise: p.obs_noise_sigma = level; break;
  }
  p.validate();
  return p;
}

struct CheckpointRef {
  std::string method;
  std::uint64_t seed = 0;
  std::filesystem::path path;
};

struct SweepSpec {
  std::string env = "pendulum";
  std::vector<CheckpointRef> checkpoints;
  Axis axis = Axis::mass;
  std::vector<double> levels = default_levels(Axis::mass);
  std::size_t episodes = 30;
  std::uint64_t eval_seed = 0;
  std::size_t threads = 1;

  void validate() const {
    if (checkpoints.empty()) throw std::invalid_argument("sweep needs at least one checkpoint");
    if (levels.empty()) throw std::invalid_argument("sweep needs at least one perturbation level");
    if (episodes == 0) throw std::invalid_argument("sweep needs at least one episode per cell");
    for (double l : levels) perturb_for(axis, l);
    envs::make_env(env);
  }
};

struct RobustnessCell {
  std::string method;
  std::uint64_t seed = 0;
  double level = 0.0;
  double raw = 0.0;    // mean return at this level
  double clean = 0.0;  // mean return without perturbation
  std::optional<double> normalized;
  std::optional<double> drop_pct;
};

struct AggregateRow {
  std::string method;
  double level = 0.0;
  MeanCi normalized;
  MeanCi drop_pct;
};

struct RobustnessReport {
  std::string env;
  Axis axis = Axis::mass;
  std::vector<RobustnessCell> cells;
  std::vector<AggregateRow> aggregate;
};

/// Fills normalized scores, drop percentages and the per-(method, level) aggregate from raw cells.
inline void finalize_report(RobustnessReport& rep) {
  std::map<double, std::map<std::string, std::vector<double>>> by_level;
  for (const auto& c : rep.cells) by_level[c.level][c.method].push_back(c.raw);
  std::map<double, double> best;
  for (const auto& [level, methods] : by_level) {
    std::optional<double> b;
    for (const auto& [_, v] : methods) {
      double s = 0.0;
      for (double x : v) s += x;
      const double m = s / static_cast<double>(v.size());
      if (!b || m > *b) b = m;
    }
    best[level] = *b;
  }
  std::map<std::pair<std::string, double>, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (auto& c : rep.cells) {
    c.normalized = score_ratio(c.raw, best[c.level]);
    c.drop_pct = drop_percentage(c.raw, c.clean);
    auto& g = groups[{c.method, c.level}];
    if (c.normalized) g.first.push_back(*c.normalized);
    if (c.drop_pct) g.second.push_back(*c.drop_pct);
  }
  rep.aggregate.clear();
  for (const auto& [key, v] : groups) rep.aggregate.push_back({key.first, key.second, mean_ci90(v.first), mean_ci90(v.second)});
}

/// Evaluates every checkpoint clean and at every level of one perturbation axis.
inline RobustnessReport run_sweep(const SweepSpec& spec) {
  spec.validate();
  auto env = envs::make_env(spec.env);
  const double bound = env->action_bound();
  std::vector<trainer::PolicySnapshot<trainer::Real>> snaps;
  for (const auto& ref : spec.checkpoints) {
    try {
      snaps.push_back(trainer::PolicySnapshot<trainer::Real>::load(ref.path, bound));
    } catch (const std::exception& e) {
      throw std::runtime_error("cannot load checkpoint for method '" + ref.method + "' seed " +
                               std::to_string(ref.seed) + " (" + ref.path.string() + "): " + e.what());
    }
  }

  // Job (k, 0) is the clean evaluation of checkpoint k, job (k, j + 1) level j.
  const std::size_t per = spec.levels.size() + 1;
  const std::size_t jobs = snaps.size() * per;
  std::vector<double> means(jobs, 0.0);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs; j = next++) {
      const std::size_t k = j / per, l = j % per;
      const envs::PerturbConfig p = l == 0 ? envs::PerturbConfig{} : perturb_for(spec.axis, spec.levels[l - 1]);
      means[j] = trainer::evaluate(snaps[k], spec.env, spec.episodes, p, spec.eval_seed).mean_return().value();
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(spec.threads, jobs));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  RobustnessReport rep;
  rep.env = spec.env;
  rep.axis = spec.axis;
  for (std::size_t k = 0; k < snaps.size(); ++k) {
    for (std::size_t l = 0; l < spec.levels.size(); ++l) {
      RobustnessCell c;
      c.method = spec.checkpoints[k].method;
      c.seed = spec.checkpoints[k].seed;
      c.level = spec.levels[l];
      c.clean = means[k * per];
      c.raw = means[k * per + l + 1];
      rep.cells.push_back(c);
    }
  }
  finalize_report(rep);
  return rep;
}

/// Gains of the scripted swing-up controller used as the competence yardstick.
struct OracleGains {
  double k_energy = 5.0;
  double k_p = 20.0;
  double k_d = 3.0;
  double switch_angle = 0.3;
};

/// Energy-shaping swing-up with linear stabilization near upright. Returns the clipped torque.
inline double oracle_pendulum_controller(double theta, double theta_dot, const OracleGains& gains = {}) {
  using P = envs::PendulumEnv;
  const double w = envs::wrap_angle(theta);
  double u;
  if (std::abs(w) < gains.switch_angle) {
    u = -gains.k_p * w - gains.k_d * theta_dot;
  } else {
    const double inertia = P::kMass * P::kLength * P::kLength / 3.0;
    const double energy = 0.5 * inertia * theta_dot * theta_dot + P::kMass * P::kGravity * 0.5 * P::kLength * std::cos(theta);
    const double target = P::kMass * P::kGravity * 0.5 * P::kLength;
    // Pump along the current direction of motion; at rest, start pushing in the positive direction.
    const double direction = theta_dot >= 0.0 ? 1.0 : -1.0;
    u = gains.k_energy * (target - energy) * direction;
  }
  return std::clamp(u, -P::kMaxTorque, P::kMaxTorque);
}

/// Adapter so the oracle plugs into trainer::evaluate.
struct OracleActor {
  OracleGains gains;
  std::vector<double> act(const std::vector<double>& obs, std::vector<double>* normalized = nullptr) const {
    const double theta = std::atan2(obs[1], obs[0]);
    const double u = oracle_pendulum_controller(theta, obs[2], gains);
    if (normalized) *normalized = {u / envs::PendulumEnv::kMaxTorque};
    return {u};
  }
};

}  // namespace terl::harness
