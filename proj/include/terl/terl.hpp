#pragma once

#include <span>
#include <vector>

#include "terl/ndgrad.hpp"
#include "terl/sac.hpp"

namespace terl::info {

using ndgrad::Adam;
using ndgrad::AdamHyper;
using ndgrad::ContractViolation;
using ndgrad::LogStdBounds;
using ndgrad::Mlp;
using ndgrad::MlpSpec;
using ndgrad::Tensor;

/// Trajectory-entropy settings. alpha = 0 recovers plain SAC.
struct TerlConfig {
  double alpha = 1e-5;
  bool sac_mode = false;
  std::size_t latent_dim = 30;
  std::size_t hidden = 256;
  double lr = 1e-4;
  LogStdBounds predictor_log_std{-10.0, 2.0};
};

inline MlpSpec encoder_spec(std::size_t obs_dim, const TerlConfig& cfg) {
  return {{obs_dim, cfg.hidden, cfg.hidden, cfg.latent_dim}, ndgrad::HeadKind::plain};
}

/// Predictor input is (z_t, z_{t+1}, a_{t-1}, is_first).
inline MlpSpec predictor_spec(std::size_t act_dim, const TerlConfig& cfg) {
  return {{2 * cfg.latent_dim + act_dim + 1, cfg.hidden, cfg.hidden, 2 * act_dim}, ndgrad::HeadKind::gaussian};
}

/// Encoder e_phi and action predictor q_psi with their optimizers.
template <typename T>
struct TerlModel {
  Mlp<T> encoder;
  Mlp<T> predictor;
  Adam<T> encoder_opt;
  Adam<T> predictor_opt;
  TerlConfig config;

  TerlModel() = default;
  TerlModel(Mlp<T> enc, Mlp<T> pred, TerlConfig cfg)
      : encoder(std::move(enc)), predictor(std::move(pred)), config(cfg) {
    AdamHyper hyper;
    hyper.lr = cfg.lr;
    encoder_opt = Adam<T>(encoder.parameters(), hyper);
    predictor_opt = Adam<T>(predictor.parameters(), hyper);
  }
};

template <typename T>
Tensor<T> encode(const Mlp<T>& encoder, const Tensor<T>& s) {
  return encoder.forward(s);
}

/// log q_psi(a_t | z_t, z_{t+1}, a_{t-1}) per batch element.
template <typename T>
Tensor<T> log_q(const Mlp<T>& predictor, const Tensor<T>& z, const Tensor<T>& z_next, const Tensor<T>& a_prev,
                const Tensor<T>& is_first, const Tensor<T>& a_t, LogStdBounds bounds) {
  auto flag = is_first.rank() == 1 ? Tensor<T>::from({is_first.size(), 1}, std::vector<T>(is_first.data().begin(),
                                                                                            is_first.data().end()))
                                   : is_first;
  auto input = ndgrad::concat_cols<T>({z, z_next, a_prev, flag});
  auto [mean, log_std] = predictor.forward_gaussian(input, bounds);
  return ndgrad::gaussian_log_prob(a_t, mean, log_std);
}

/// Per-step estimate of the trajectory-entropy upper bound: -mean(log q).
template <typename T>
T upper_bound_batch(std::span<const T> log_q_values) {
  if (log_q_values.empty()) throw ContractViolation("upper_bound_batch: empty batch");
  T acc{0};
  for (T v : log_q_values) acc += v;
  return -acc / static_cast<T>(log_q_values.size());
}

/// r* = r + alpha log q, elementwise.
template <typename T>
std::vector<T> info_reward(std::span<const T> r, std::span<const T> log_q_values, double alpha) {
  if (alpha < 0.0) throw ContractViolation("info_reward: alpha must be >= 0");
  if (r.size() != log_q_values.size()) throw ContractViolation("info_reward: length mismatch");
  std::vector<T> out(r.size());
  const T a = static_cast<T>(alpha);
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = r[i] + a * log_q_values[i];
  return out;
}

/// Batch tensors consumed by the joint objective.
template <typename T>
struct ActorBatch {
  Tensor<T> s, a, s_next, a_prev, is_first;  // is_first as [batch, 1]
  std::vector<T> r;
};

template <typename T>
struct ActorObjective {
  Tensor<T> loss;  // negated maximization target, scalar
  double value = 0.0;
  Tensor<T> log_pi_next;
  double upper_bound = 0.0;
};

/// Joint objective over policy, encoder and predictor:
/// maximize mean[r + alpha log q - beta log pi(a_t|z_t) + gamma (Q(s', a') - beta log pi(a'|z'))].
template <typename T>
ActorObjective<T> actor_objective(const TerlModel<T>& model, const Mlp<T>& policy, const sac::CriticPair<T>& critics,
                                  const ActorBatch<T>& batch, double alpha, T beta, T gamma, LogStdBounds policy_bounds,
                                  sac::EntropySample entropy, Rng& rng) {
  auto z = encode(model.encoder, batch.s);
  auto z_next = encode(model.encoder, batch.s_next);
  auto lq = log_q(model.predictor, z, z_next, batch.a_prev, batch.is_first, batch.a, model.config.predictor_log_std);
  auto terms = sac::soft_actor_terms(policy, critics, z, z_next, batch.s_next, batch.a, beta, gamma, policy_bounds, entropy, rng);
  auto objective = ndgrad::mean(ndgrad::add(ndgrad::scale(lq, static_cast<T>(alpha)), terms.per_sample));
  double r_mean = 0.0;
  for (T v : batch.r) r_mean += static_cast<double>(v);
  r_mean /= static_cast<double>(batch.r.size());
  return {ndgrad::scale(objective, T{-1}), r_mean + static_cast<double>(objective.item()), terms.log_pi_next,
          static_cast<double>(upper_bound_batch<T>(lq.data()))};
}

}  // namespace terl::info
