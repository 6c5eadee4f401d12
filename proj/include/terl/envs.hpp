#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "terl/ndgrad/tensor.hpp"
#include "terl/rng.hpp"

namespace terl::envs {

using ndgrad::ContractViolation;

/// Evaluation-time perturbations. Defaults are neutral.
struct PerturbConfig {
  double mass_scale = 1.0;
  double gravity_scale = 1.0;
  double action_noise_sigma = 0.0;
  double obs_noise_sigma = 0.0;

  void validate() const {
    if (!(mass_scale > 0.0) || !(gravity_scale > 0.0)) throw ContractViolation("perturbation scales must be > 0");
    if (!(action_noise_sigma >= 0.0) || !(obs_noise_sigma >= 0.0)) {
      throw ContractViolation("perturbation noise sigmas must be >= 0");
    }
  }
  bool neutral() const {
    return mass_scale == 1.0 && gravity_scale == 1.0 && action_noise_sigma == 0.0 && obs_noise_sigma == 0.0;
  }
};

struct StepResult {
  std::vector<double> observation;
  std::vector<double> executed_action;
  double reward = 0.0;
  bool done = false;  // time-limit truncation only
  std::size_t step = 0;
};

inline double wrap_angle(double theta) {
  constexpr double pi = std::numbers::pi;
  double w = std::fmod(theta + pi, 2.0 * pi);
  if (w < 0.0) w += 2.0 * pi;
  return w - pi;
}

class Env {
 public:
  virtual ~Env() = default;

  virtual std::string name() const = 0;
  virtual std::size_t observation_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  /// Symmetric per-component action bound: actions live in [-bound, bound].
  virtual double action_bound() const = 0;
  std::size_t episode_length() const { return 200; }

  std::vector<double> reset(std::uint64_t seed) {
    Rng rng(seed);
    reset_state(rng);
    step_index_ = 0;
    active_ = true;
    return true_observation();
  }

  StepResult step(std::span<const double> action, const PerturbConfig& perturb, Rng& rng) {
    if (!active_) throw ContractViolation(name() + ": step() without an active episode");
    if (action.size() != action_dim()) {
      throw ContractViolation(name() + ": action has " + std::to_string(action.size()) + " components, expected " +
                              std::to_string(action_dim()));
    }
    for (double a : action)
      if (!std::isfinite(a)) throw ContractViolation(name() + ": non-finite action");

    StepResult out;
    out.executed_action.assign(action.begin(), action.end());
    if (perturb.action_noise_sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, perturb.action_noise_sigma);
      for (auto& a : out.executed_action) a += noise(rng);
    }
    const double bound = action_bound();
    for (auto& a : out.executed_action) a = std::clamp(a, -bound, bound);

    out.reward = advance(out.executed_action, perturb);
    out.step = ++step_index_;
    out.done = step_index_ >= episode_length();
    if (out.done) active_ = false;

    out.observation = true_observation();
    if (perturb.obs_noise_sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, perturb.obs_noise_sigma);
      for (auto& o : out.observation) o += noise(rng);
    }
    return out;
  }

  virtual std::vector<double> true_observation() const = 0;
  std::size_t step_index() const { return step_index_; }

 protected:
  virtual void reset_state(Rng& rng) = 0;
  /// Integrates one time step with the executed (noisy, clipped) action; returns the reward.
  virtual double advance(std::span<const double> action, const PerturbConfig& perturb) = 0;

  void force_active() {
    active_ = true;
    step_index_ = 0;
  }

 private:
  std::size_t step_index_ = 0;
  bool active_ = false;
};

/// Torque-limited pendulum swing-up; theta = 0 is upright.
class PendulumEnv final : public Env {
 public:
  static constexpr double kMass = 1.0, kLength = 1.0, kGravity = 10.0, kDt = 0.05;
  static constexpr double kMaxTorque = 2.0, kMaxSpeed = 8.0;

  std::string name() const override { return "pendulum"; }
  std::size_t observation_dim() const override { return 3; }
  std::size_t action_dim() const override { return 1; }
  double action_bound() const override { return kMaxTorque; }

  std::vector<double> true_observation() const override {
    return {std::cos(theta_), std::sin(theta_), theta_dot_};
  }

  /// Places the pendulum in a given state and starts a fresh episode from it.
  void set_state(double theta, double theta_dot) {
    theta_ = theta;
    theta_dot_ = theta_dot;
    force_active();
  }
  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }

  static double reward(double theta, double theta_dot, double torque) {
    const double w = wrap_angle(theta);
    return -(w * w + 0.1 * theta_dot * theta_dot + 0.001 * torque * torque);
  }

 protected:
  void reset_state(Rng& rng) override {
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    std::uniform_real_distribution<double> speed(-1.0, 1.0);
    theta_ = angle(rng);
    theta_dot_ = speed(rng);
  }

  double advance(std::span<const double> action, const PerturbConfig& perturb) override {
    const double u = action[0];
    const double r = reward(theta_, theta_dot_, u);
    const double m = perturb.mass_scale * kMass;
    const double g = perturb.gravity_scale * kGravity;
    theta_dot_ += (3.0 * g / (2.0 * kLength)) * std::sin(theta_) * kDt + (3.0 / (m * kLength * kLength)) * u * kDt;
    theta_dot_ = std::clamp(theta_dot_, -kMaxSpeed, kMaxSpeed);
    theta_ += theta_dot_ * kDt;
    return r;
  }

 private:
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
};

/// Planar point mass pushed from (-1,-1) toward the goal (1,1) inside a walled box.
class PointMassEnv final : public Env {
 public:
  static constexpr double kMass = 1.0, kDt = 0.05, kBox = 2.0, kMaxVel = 2.0, kMaxForce = 1.0;
  static constexpr std::array<double, 2> kGoal{1.0, 1.0};

  std::string name() const override { return "pointmass"; }
  std::size_t observation_dim() const override { return 4; }
  std::size_t action_dim() const override { return 2; }
  double action_bound() const override { return kMaxForce; }

  std::vector<double> true_observation() const override { return {pos_[0], pos_[1], vel_[0], vel_[1]}; }

  void set_state(std::array<double, 2> pos, std::array<double, 2> vel) {
    pos_ = pos;
    vel_ = vel;
    force_active();
  }

 protected:
  void reset_state(Rng& rng) override {
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    pos_ = {-1.0 + jitter(rng), -1.0 + jitter(rng)};
    vel_ = {0.0, 0.0};
  }

  double advance(std::span<const double> action, const PerturbConfig& perturb) override {
    const double m = perturb.mass_scale * kMass;
    double force_sq = 0.0;
    for (int i = 0; i < 2; ++i) {
      vel_[i] = std::clamp(vel_[i] + (action[i] / m) * kDt, -kMaxVel, kMaxVel);
      pos_[i] += vel_[i] * kDt;
      if (pos_[i] > kBox || pos_[i] < -kBox) {
        pos_[i] = std::clamp(pos_[i], -kBox, kBox);
        vel_[i] = 0.0;
      }
      force_sq += action[i] * action[i];
    }
    const double dx = pos_[0] - kGoal[0], dy = pos_[1] - kGoal[1];
    return -std::sqrt(dx * dx + dy * dy) - 0.01 * force_sq;
  }

 private:
  std::array<double, 2> pos_{-1.0, -1.0};
  std::array<double, 2> vel_{0.0, 0.0};
};

inline std::unique_ptr<Env> make_env(const std::string& name) {
  if (name == "pendulum") return std::make_unique<PendulumEnv>();
  if (name == "pointmass") return std::make_unique<PointMassEnv>();
  throw std::invalid_argument("unknown environment '" + name + "' (expected pendulum or pointmass)");
}

}  // namespace terl::envs
