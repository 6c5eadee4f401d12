#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "terl/ndgrad.hpp"
#include "terl/replay.hpp"
#include "terl/rng.hpp"
#include "terl/sac.hpp"
#ifndef TERL_EXCLUDE_TERL
#include "terl/terl.hpp"
#endif

namespace terl {

using ndgrad::Adam;
using ndgrad::AdamHyper;
using ndgrad::Mlp;
using ndgrad::MlpSpec;
using ndgrad::Tensor;

/// Settings of the trajectory-entropy extension; shared by both builds so configs stay portable.
struct TerlSettings {
  double alpha = 1e-5;
  bool sac_mode = false;
  std::size_t latent_dim = 30;
  double lr = 1e-4;
};

/// Whether this build carries the trajectory-entropy module.
inline constexpr bool kTerlAvailable =
#ifdef TERL_EXCLUDE_TERL
    false;
#else
    true;
#endif

struct UpdateStats {
  double critic_loss = 0.0;
  std::optional<double> actor_objective;
  std::optional<double> upper_bound;
  double beta = 0.0;
};

/// Everything the joint update touches: policy, twin critics and targets, temperature, encoder and predictor.
template <typename T>
struct AgentBundle {
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;
  sac::SacConfig sac_cfg;
  TerlSettings terl_cfg;

  Mlp<T> policy;
  Adam<T> policy_opt;
  sac::CriticPair<T> critics;
  sac::Temperature<T> temperature;
#ifndef TERL_EXCLUDE_TERL
  std::optional<info::TerlModel<T>> terl;
#endif
  std::uint64_t actor_updates = 0;

  static AgentBundle create(std::size_t obs_dim, std::size_t act_dim, const sac::SacConfig& sac_cfg,
                            const TerlSettings& terl_cfg, std::uint64_t seed) {
    if (!kTerlAvailable && !terl_cfg.sac_mode) {
      throw std::invalid_argument("this build excludes the trajectory-entropy module; only sac_mode runs are possible");
    }
    AgentBundle b;
    b.obs_dim = obs_dim;
    b.act_dim = act_dim;
    b.sac_cfg = sac_cfg;
    b.terl_cfg = terl_cfg;
    Rng rng = make_rng(seed, Stream::init);
    const std::size_t h = sac_cfg.hidden;
    const std::size_t policy_in = terl_cfg.sac_mode ? obs_dim : terl_cfg.latent_dim;
    b.policy = Mlp<T>({{policy_in, h, h, 2 * act_dim}, ndgrad::HeadKind::gaussian}, rng);
    Mlp<T> q1({{obs_dim + act_dim, h, h, 1}, ndgrad::HeadKind::plain}, rng);
    Mlp<T> q2({{obs_dim + act_dim, h, h, 1}, ndgrad::HeadKind::plain}, rng);
    AdamHyper hyper;
    hyper.lr = sac_cfg.lr;
    b.policy_opt = Adam<T>(b.policy.parameters(), hyper);
    b.critics = sac::CriticPair<T>(std::move(q1), std::move(q2), hyper);
    b.temperature = sac::Temperature<T>(sac_cfg.init_temperature, -static_cast<double>(act_dim),
                                        sac_cfg.learn_temperature, hyper);
#ifndef TERL_EXCLUDE_TERL
    if (!terl_cfg.sac_mode) {
      info::TerlConfig tc;
      tc.alpha = terl_cfg.alpha;
      tc.latent_dim = terl_cfg.latent_dim;
      tc.hidden = h;
      tc.lr = terl_cfg.lr;
      tc.predictor_log_std = sac_cfg.log_std;
      Mlp<T> enc(info::encoder_spec(obs_dim, tc), rng);
      Mlp<T> pred(info::predictor_spec(act_dim, tc), rng);
      b.terl.emplace(std::move(enc), std::move(pred), tc);
    }
#endif
    return b;
  }

  bool uses_encoder() const {
#ifndef TERL_EXCLUDE_TERL
    return terl.has_value();
#else
    return false;
#endif
  }

  /// Policy input for raw states: e_phi(s), or s itself in sac_mode.
  Tensor<T> latent(const Tensor<T>& s) const {
#ifndef TERL_EXCLUDE_TERL
    if (terl) return info::encode(terl->encoder, s);
#endif
    return s;
  }

  ndgrad::NamedTensors<T> named_parameters() const {
    ndgrad::NamedTensors<T> out = policy.named_parameters("policy");
    auto append = [&out](ndgrad::NamedTensors<T> more) { out.insert(out.end(), more.begin(), more.end()); };
    append(critics.q1.named_parameters("critic1"));
    append(critics.q2.named_parameters("critic2"));
    append(critics.target1.named_parameters("target1"));
    append(critics.target2.named_parameters("target2"));
    out.emplace_back("log_beta", temperature.log_beta);
#ifndef TERL_EXCLUDE_TERL
    if (terl) {
      append(terl->encoder.named_parameters("encoder"));
      append(terl->predictor.named_parameters("predictor"));
    }
#endif
    return out;
  }
};

template <typename T>
struct BatchTensors {
  Tensor<T> s, a, s_next, a_prev, is_first;
  std::vector<T> r, done;

  explicit BatchTensors(const replay::Batch& b)
      : s(sac::matrix<T>(b.s, b.size, b.obs_dim)),
        a(sac::matrix<T>(b.a, b.size, b.act_dim)),
        s_next(sac::matrix<T>(b.s_next, b.size, b.obs_dim)),
        a_prev(sac::matrix<T>(b.a_prev, b.size, b.act_dim)),
        is_first(sac::matrix<T>(b.is_first, b.size, 1)),
        r(b.r.begin(), b.r.end()),
        done(b.done.begin(), b.done.end()) {}
};

/// One gradient step of the joint algorithm: critic update every call, actor/encoder/predictor and
/// temperature every `actor_update_every` critic updates.
template <typename T>
UpdateStats gradient_step(AgentBundle<T>& agent, const replay::Batch& batch, Rng& policy_rng) {
  const BatchTensors<T> bt(batch);
  const auto& cfg = agent.sac_cfg;
  const T gamma = static_cast<T>(cfg.gamma);
  UpdateStats stats;

  // Critic: bootstrapped target on the information-regularized reward.
  {
    std::vector<T> r_star = bt.r;
    Tensor<T> z_next = bt.s_next;
#ifndef TERL_EXCLUDE_TERL
    if (agent.terl) {
      auto& m = *agent.terl;
      auto z = info::encode(m.encoder, bt.s);
      z_next = info::encode(m.encoder, bt.s_next);
      auto lq = info::log_q(m.predictor, z, z_next, bt.a_prev, bt.is_first, bt.a, m.config.predictor_log_std);
      r_star = info::info_reward<T>(bt.r, lq.data(), m.config.alpha);
      stats.upper_bound = static_cast<double>(info::upper_bound_batch<T>(lq.data()));
      z_next = z_next.detach();
    }
#endif
    auto y = sac::critic_target<T>(agent.critics, agent.policy, z_next, bt.s_next, r_star, bt.done,
                                agent.temperature.beta(), gamma, cfg.log_std, policy_rng);
    stats.critic_loss = sac::critic_update<T>(agent.critics, bt.s, bt.a, y, cfg);
  }

  if (agent.critics.updates % cfg.actor_update_every == 0) {
    agent.critics.set_online_requires_grad(false);
    agent.policy_opt.zero_grad();
    const T beta = agent.temperature.beta();
    Tensor<T> loss, log_pi_next;
    double objective = 0.0;
#ifndef TERL_EXCLUDE_TERL
    if (agent.terl) {
      auto& m = *agent.terl;
      m.encoder_opt.zero_grad();
      m.predictor_opt.zero_grad();
      info::ActorBatch<T> ab{bt.s, bt.a, bt.s_next, bt.a_prev, bt.is_first, bt.r};
      auto obj = info::actor_objective(m, agent.policy, agent.critics, ab, m.config.alpha, beta, gamma, cfg.log_std,
                                       cfg.actor_entropy, policy_rng);
      loss = obj.loss;
      objective = obj.value;
      log_pi_next = obj.log_pi_next;
      loss.backward();
      agent.policy_opt.step();
      m.encoder_opt.step();
      m.predictor_opt.step();
    } else
#endif
    {
      auto terms = sac::soft_actor_terms(agent.policy, agent.critics, bt.s, bt.s_next, bt.s_next, bt.a, beta, gamma,
                                         cfg.log_std, cfg.actor_entropy, policy_rng);
      auto obj = ndgrad::mean(terms.per_sample);
      loss = ndgrad::scale(obj, T{-1});
      double r_mean = 0.0;
      for (T v : bt.r) r_mean += static_cast<double>(v);
      objective = r_mean / static_cast<double>(bt.r.size()) + static_cast<double>(obj.item());
      log_pi_next = terms.log_pi_next;
      loss.backward();
      agent.policy_opt.step();
    }
    agent.critics.set_online_requires_grad(true);
    sac::temperature_update<T>(agent.temperature, log_pi_next.data());
    ++agent.actor_updates;
    stats.actor_objective = objective;
  }
  stats.beta = static_cast<double>(agent.temperature.beta());
  return stats;
}

}  // namespace terl
