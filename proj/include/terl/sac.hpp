#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "terl/ndgrad.hpp"
#include "terl/rng.hpp"

namespace terl::sac {

using ndgrad::Adam;
using ndgrad::AdamHyper;
using ndgrad::ContractViolation;
using ndgrad::LogStdBounds;
using ndgrad::Mlp;
using ndgrad::MlpSpec;
using ndgrad::Tensor;

/// Which action the current-state entropy term -beta log pi(a_t|z_t) of the actor objective is evaluated on:
/// a fresh reparameterized draw from pi(.|z_t), or the action stored in the replay buffer.
enum class EntropySample { sampled, replayed };

/// Soft actor-critic settings. Defaults follow the reference hyperparameter table.
struct SacConfig {
  double gamma = 0.99;
  double lr = 1e-4;
  double ema_tau = 0.01;
  std::size_t target_update_every = 2;  // in critic updates
  std::size_t actor_update_every = 2;   // in environment steps
  double init_temperature = 0.1;
  bool learn_temperature = true;
  std::size_t hidden = 256;
  LogStdBounds log_std{-10.0, 2.0};
  EntropySample actor_entropy = EntropySample::sampled;
};

template <typename T>
Tensor<T> matrix(std::span<const float> values, std::size_t rows, std::size_t cols) {
  return Tensor<T>::from({rows, cols}, std::vector<T>(values.begin(), values.end()));
}

template <typename T>
Tensor<T> vector_tensor(std::span<const float> values) {
  return Tensor<T>::from({values.size()}, std::vector<T>(values.begin(), values.end()));
}

template <typename T>
struct PolicySample {
  Tensor<T> action;    // [batch, act] in (-1, 1)
  Tensor<T> log_prob;  // [batch]
};

/// Reparameterized draw a = tanh(mu + sigma * xi) with its squashed log-density.
template <typename T>
PolicySample<T> sample_policy(const Mlp<T>& policy, const Tensor<T>& z, LogStdBounds bounds, Rng& rng) {
  auto [mean, log_std] = policy.forward_gaussian(z, bounds);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<T> xi(mean.size());
  for (auto& v : xi) v = static_cast<T>(normal(rng));
  auto noise = Tensor<T>::from(mean.shape(), std::move(xi));
  auto u = ndgrad::add(mean, ndgrad::mul(ndgrad::exp(log_std), noise));
  auto squashed = ndgrad::tanh_squash_log_prob(u, mean, log_std);
  return {squashed.action, squashed.log_prob};
}

/// log pi(a | z) for given squashed actions (e.g. replayed ones).
template <typename T>
Tensor<T> policy_log_prob(const Mlp<T>& policy, const Tensor<T>& z, const Tensor<T>& action, LogStdBounds bounds) {
  auto [mean, log_std] = policy.forward_gaussian(z, bounds);
  if (action.shape() != mean.shape()) throw ContractViolation("policy_log_prob: action shape mismatch");
  constexpr double edge = 1.0 - 1e-6;
  std::vector<T> pre(action.size());
  for (std::size_t i = 0; i < pre.size(); ++i) {
    const double a = std::clamp(static_cast<double>(action[i]), -edge, edge);
    pre[i] = static_cast<T>(std::atanh(a));
  }
  auto u = Tensor<T>::from(action.shape(), std::move(pre));
  return ndgrad::tanh_squash_log_prob(u, mean, log_std).log_prob;
}

enum class ActMode { stochastic, deterministic };

/// Action for a single latent, affinely mapped to [-bound, bound]. Also returns the normalized action.
template <typename T>
std::vector<double> act(const Mlp<T>& policy, std::span<const T> z, ActMode mode, LogStdBounds bounds, Rng& rng,
                        double action_bound, std::vector<double>* normalized = nullptr) {
  auto zt = Tensor<T>::from({1, z.size()}, std::vector<T>(z.begin(), z.end()));
  Tensor<T> a;
  if (mode == ActMode::stochastic) {
    a = sample_policy(policy, zt, bounds, rng).action;
  } else {
    a = ndgrad::tanh(policy.forward_gaussian(zt, bounds).first);
  }
  std::vector<double> out(a.size());
  if (normalized) normalized->resize(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double n = static_cast<double>(a[i]);
    if (normalized) (*normalized)[i] = n;
    out[i] = n * action_bound;
  }
  return out;
}

/// Q(s, a) as a [batch] tensor.
template <typename T>
Tensor<T> q_value(const Mlp<T>& critic, const Tensor<T>& s, const Tensor<T>& a) {
  return ndgrad::sum_cols(critic.forward(ndgrad::concat_cols<T>({s, a})));
}

/// Twin online critics, their EMA targets and the shared optimizer.
template <typename T>
struct CriticPair {
  Mlp<T> q1, q2, target1, target2;
  Adam<T> optimizer;
  std::uint64_t updates = 0;
  std::uint64_t ema_applications = 0;

  CriticPair() = default;
  CriticPair(Mlp<T> a, Mlp<T> b, AdamHyper hyper)
      : q1(std::move(a)), q2(std::move(b)), target1(q1.clone()), target2(q2.clone()) {
    target1.set_requires_grad(false);
    target2.set_requires_grad(false);
    auto params = q1.parameters();
    for (auto& p : q2.parameters()) params.push_back(p);
    optimizer = Adam<T>(std::move(params), hyper);
  }

  void set_online_requires_grad(bool flag) {
    q1.set_requires_grad(flag);
    q2.set_requires_grad(flag);
  }
};

/// y = r* + gamma (1 - d) [min_q_next - beta log_pi_next], elementwise.
template <typename T>
std::vector<T> critic_target_values(std::span<const T> r_star, std::span<const T> done, std::span<const T> min_q_next,
                                    std::span<const T> log_pi_next, T beta, T gamma) {
  const std::size_t n = r_star.size();
  if (done.size() != n || min_q_next.size() != n || log_pi_next.size() != n) {
    throw ContractViolation("critic_target_values: length mismatch");
  }
  std::vector<T> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = r_star[i] + gamma * (T{1} - done[i]) * (min_q_next[i] - beta * log_pi_next[i]);
  }
  return y;
}

/// Bootstrapped critic targets; the returned values carry no gradient.
template <typename T>
std::vector<T> critic_target(const CriticPair<T>& critics, const Mlp<T>& policy, const Tensor<T>& z_next,
                             const Tensor<T>& s_next, std::span<const T> r_star, std::span<const T> done, T beta,
                             T gamma, LogStdBounds bounds, Rng& rng) {
  auto next = sample_policy(policy, z_next, bounds, rng);
  auto a_next = next.action.detach();
  auto min_q = ndgrad::minimum(q_value(critics.target1, s_next, a_next), q_value(critics.target2, s_next, a_next));
  return critic_target_values<T>(r_star, done, min_q.data(), next.log_prob.data(), beta, gamma);
}

/// target <- (1 - tau) target + tau online
template <typename T>
void soft_update(const Mlp<T>& online, Mlp<T>& target, double tau) {
  auto src = online.parameters();
  auto dst = target.parameters();
  if (src.size() != dst.size()) throw ContractViolation("soft_update: architecture mismatch");
  const T keep = static_cast<T>(1.0 - tau), mix = static_cast<T>(tau);
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].shape() != dst[i].shape()) throw ContractViolation("soft_update: shape mismatch");
    auto d = dst[i].mutable_data();
    auto s = src[i].data();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = keep * d[k] + mix * s[k];
  }
}

/// One Adam step on both critics against the same fixed targets. Returns the mean squared TD error.
template <typename T>
double critic_update(CriticPair<T>& critics, const Tensor<T>& s, const Tensor<T>& a, std::span<const T> y,
                     const SacConfig& cfg) {
  auto target = Tensor<T>::from({y.size()}, std::vector<T>(y.begin(), y.end()));
  critics.optimizer.zero_grad();
  auto e1 = ndgrad::mean(ndgrad::square(ndgrad::sub(q_value(critics.q1, s, a), target)));
  auto e2 = ndgrad::mean(ndgrad::square(ndgrad::sub(q_value(critics.q2, s, a), target)));
  auto loss = ndgrad::add(e1, e2);
  loss.backward();
  critics.optimizer.step();
  ++critics.updates;
  if (critics.updates % cfg.target_update_every == 0) {
    soft_update(critics.q1, critics.target1, cfg.ema_tau);
    soft_update(critics.q2, critics.target2, cfg.ema_tau);
    ++critics.ema_applications;
  }
  return 0.5 * static_cast<double>(loss.item());
}

/// Learnable entropy coefficient stored as log(beta).
template <typename T>
struct Temperature {
  Tensor<T> log_beta;
  Adam<T> optimizer;
  double target_entropy = 0.0;
  bool learn = true;

  Temperature() = default;
  Temperature(double initial, double target, bool learnable, AdamHyper hyper)
      : log_beta(Tensor<T>::scalar(static_cast<T>(std::log(initial)), true)),
        optimizer({log_beta}, hyper),
        target_entropy(target),
        learn(learnable) {}

  T beta() const { return static_cast<T>(std::exp(log_beta.item())); }
};

/// One Adam step on J = mean(-beta (log_pi + target_entropy)) with log_pi held fixed.
template <typename T>
T temperature_update(Temperature<T>& temp, std::span<const T> log_pi) {
  if (!temp.learn) return temp.beta();
  std::vector<T> shifted(log_pi.begin(), log_pi.end());
  for (auto& v : shifted) v += static_cast<T>(temp.target_entropy);
  const std::size_t n = shifted.size();
  auto c = Tensor<T>::from({n}, std::move(shifted));
  temp.optimizer.zero_grad();
  auto loss = ndgrad::scale(ndgrad::mean(ndgrad::mul_by_scalar_tensor(c, ndgrad::exp(temp.log_beta))), T{-1});
  loss.backward();
  temp.optimizer.step();
  return temp.beta();
}

template <typename T>
struct ActorTerms {
  Tensor<T> per_sample;   // [batch]: -beta log pi(a_t|z_t) + gamma (min Q(s', a') - beta log pi(a'|z'))
  Tensor<T> log_pi_next;  // [batch], fresh samples at z'
};

/// Soft actor terms of the joint objective. Critic parameters must be frozen by the caller.
template <typename T>
ActorTerms<T> soft_actor_terms(const Mlp<T>& policy, const CriticPair<T>& critics, const Tensor<T>& z,
                               const Tensor<T>& z_next, const Tensor<T>& s_next, const Tensor<T>& a_replayed, T beta,
                               T gamma, LogStdBounds bounds, EntropySample entropy, Rng& rng) {
  auto log_pi_now = entropy == EntropySample::replayed ? policy_log_prob(policy, z, a_replayed, bounds)
                                                       : sample_policy(policy, z, bounds, rng).log_prob;
  auto next = sample_policy(policy, z_next, bounds, rng);
  auto min_q = ndgrad::minimum(q_value(critics.q1, s_next, next.action), q_value(critics.q2, s_next, next.action));
  auto soft_next = ndgrad::sub(min_q, ndgrad::scale(next.log_prob, beta));
  auto per_sample = ndgrad::add(ndgrad::scale(log_pi_now, -beta), ndgrad::scale(soft_next, gamma));
  return {per_sample, next.log_prob};
}

}  // namespace terl::sac
