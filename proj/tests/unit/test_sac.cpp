#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "support.hpp"
#include "terl/agent.hpp"

using namespace terl;
using ndgrad::Mlp;
using ndgrad::Tensor;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

template <typename T>
Mlp<T> small_net(std::vector<std::size_t> widths, ndgrad::HeadKind head, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Mlp<T>({std::move(widths), head}, rng);
}

template <typename T>
Tensor<T> random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  std::vector<T> v(r * c);
  for (auto& x : v) x = static_cast<T>(n(rng));
  return Tensor<T>::from({r, c}, std::move(v));
}

template <typename T>
void zero_all(Mlp<T>& net) {
  for (auto& p : net.parameters())
    for (auto& v : p.mutable_data()) v = T{0};
}

/// Plain loop forward pass of a ReLU MLP on one input row.
std::vector<double> forward_row(const Mlp<float>& net, std::vector<double> x) {
  auto p = net.parameters();
  for (std::size_t l = 0; l < p.size() / 2; ++l) {
    const auto w = p[2 * l].data(), b = p[2 * l + 1].data();
    const std::size_t in = p[2 * l].shape()[0], out = p[2 * l].shape()[1];
    std::vector<double> y(out);
    for (std::size_t j = 0; j < out; ++j) {
      double s = b[j];
      for (std::size_t i = 0; i < in; ++i) s += x[i] * w[i * out + j];
      y[j] = (l + 1 < p.size() / 2 && s < 0) ? 0.0 : s;
    }
    x = std::move(y);
  }
  return x;
}

AgentBundle<double> tiny_agent(bool sac_mode, std::uint64_t seed = 1) {
  sac::SacConfig cfg;
  cfg.hidden = 8;
  TerlSettings ts;
  ts.sac_mode = sac_mode;
  ts.alpha = sac_mode ? 0.0 : 1e-2;
  ts.latent_dim = 4;
  return AgentBundle<double>::create(3, 1, cfg, ts, seed);
}

replay::Batch random_batch(std::size_t n, std::uint64_t seed) {
  replay::ReplayBuffer buf(3, 1, 100);
  replay::EpisodeTracker tr(1);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  tr.begin_episode();
  for (std::size_t t = 0; t < 20; ++t) {
    buf.push(tr.record(t, {u(rng), u(rng), u(rng)}, {u(rng)}, u(rng), {u(rng), u(rng), u(rng)}, false));
  }
  Rng r(seed);
  return buf.sample(n, r);
}

}  // namespace

TEST_CASE("zero-weight policy acts with zero") {
  auto policy = small_net<float>({3, 8, 2}, ndgrad::HeadKind::gaussian, 1);
  zero_all(policy);
  Rng rng(0);
  const std::vector<float> z{0.3f, -1.0f, 2.0f};
  auto a = sac::act<float>(policy, z, sac::ActMode::deterministic, {}, rng, 2.0);
  CHECK(a == std::vector<double>{0.0});
}

TEST_CASE("actions respect the environment bound") {
  auto policy = small_net<float>({3, 8, 2}, ndgrad::HeadKind::gaussian, 2);
  for (auto& v : policy.parameters().back().mutable_data()) v = 5.0f;
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const std::vector<float> z{static_cast<float>(i) - 50.0f, 1.0f, -3.0f};
    std::vector<double> normalized;
    auto a = sac::act<float>(policy, z, sac::ActMode::stochastic, {}, rng, 2.0, &normalized);
    CHECK(std::abs(a[0]) <= 2.0);
    CHECK(std::abs(normalized[0]) <= 1.0);
    CHECK(a[0] == normalized[0] * 2.0);
  }
}

TEST_CASE("stochastic actions are reproducible") {
  auto policy = small_net<float>({3, 8, 2}, ndgrad::HeadKind::gaussian, 3);
  Rng r1(42), r2(42);
  const std::vector<float> z{0.1f, 0.2f, 0.3f};
  for (int i = 0; i < 5; ++i) {
    CHECK(sac::act<float>(policy, z, sac::ActMode::stochastic, {}, r1, 2.0) ==
          sac::act<float>(policy, z, sac::ActMode::stochastic, {}, r2, 2.0));
  }
}

TEST_CASE("critic target arithmetic") {
  const std::vector<double> r{1.0}, d0{0.0}, d1{1.0}, q{10.0}, lp{-1.0};
  CHECK_THAT(sac::critic_target_values<double>(r, d0, q, lp, 0.1, 0.99)[0], WithinAbs(10.999, 1e-12));
  CHECK(sac::critic_target_values<double>(r, d1, q, lp, 0.1, 0.99)[0] == 1.0);
}

TEST_CASE("critic target matches a straight-line implementation") {
  auto policy = small_net<float>({3, 6, 2}, ndgrad::HeadKind::gaussian, 4);
  sac::CriticPair<float> critics(small_net<float>({4, 6, 1}, ndgrad::HeadKind::plain, 5),
                                 small_net<float>({4, 6, 1}, ndgrad::HeadKind::plain, 6), {});
  const std::size_t n = 5;
  auto s_next = random_matrix<float>(n, 3, 7);
  const std::vector<float> r{0.5f, -1.0f, 2.0f, 0.0f, 1.0f}, done{0, 0, 1, 0, 0};
  Rng rng(8);
  auto y = sac::critic_target<float>(critics, policy, s_next, s_next, r, done, 0.2f, 0.99f, {}, rng);

  Rng oracle_rng(8);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(s_next.data().begin() + 3 * i, s_next.data().begin() + 3 * i + 3);
    auto head = forward_row(policy, s);
    const double mu = head[0], log_std = std::clamp(head[1], -10.0, 2.0);
    const double u = mu + std::exp(log_std) * normal(oracle_rng);
    const double a = std::tanh(u);
    const double z = (u - mu) / std::exp(log_std);
    const double logp = -0.5 * z * z - log_std - 0.5 * std::log(2 * std::numbers::pi) - std::log(1 - a * a + 1e-6);
    auto sa = s;
    sa.push_back(a);
    const double q = std::min(forward_row(critics.target1, sa)[0], forward_row(critics.target2, sa)[0]);
    const double expected = r[i] + 0.99 * (1 - done[i]) * (q - 0.2 * logp);
    CHECK_THAT(static_cast<double>(y[i]), WithinAbs(expected, 1e-5) || WithinRel(expected, 1e-5));
  }
}

TEST_CASE("bootstrapped value never exceeds either target critic") {
  auto policy = small_net<double>({3, 6, 2}, ndgrad::HeadKind::gaussian, 9);
  sac::CriticPair<double> critics(small_net<double>({4, 6, 1}, ndgrad::HeadKind::plain, 10),
                                  small_net<double>({4, 6, 1}, ndgrad::HeadKind::plain, 11), {});
  auto s = random_matrix<double>(16, 3, 12);
  const std::vector<double> zeros(16, 0.0);
  Rng rng(13);
  Rng replay_rng = rng;
  auto y = sac::critic_target<double>(critics, policy, s, s, zeros, zeros, 0.0, 1.0, {}, rng);
  auto a = sac::sample_policy(policy, s, {}, replay_rng).action;
  auto q1 = sac::q_value(critics.target1, s, a), q2 = sac::q_value(critics.target2, s, a);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(y[i] <= q1[i]);
    CHECK(y[i] <= q2[i]);
  }
}

TEST_CASE("critic loss vanishes when Q already equals the target") {
  auto q1 = small_net<double>({4, 6, 1}, ndgrad::HeadKind::plain, 14);
  auto q2 = small_net<double>({4, 6, 1}, ndgrad::HeadKind::plain, 15);
  zero_all(q1);
  zero_all(q2);
  sac::CriticPair<double> critics(q1, q2, {});
  auto s = random_matrix<double>(4, 3, 16);
  auto a = random_matrix<double>(4, 1, 17);
  const std::vector<double> y(4, 0.0);
  CHECK(sac::critic_update<double>(critics, s, a, y, {}) == 0.0);
  for (const auto& p : critics.q1.parameters())
    for (double g : p.grad()) CHECK(g == 0.0);
}

TEST_CASE("critic loss decreases on a frozen batch") {
  sac::CriticPair<double> critics(small_net<double>({4, 16, 1}, ndgrad::HeadKind::plain, 18),
                                  small_net<double>({4, 16, 1}, ndgrad::HeadKind::plain, 19), {1e-3});
  auto s = random_matrix<double>(32, 3, 20);
  auto a = random_matrix<double>(32, 1, 21);
  std::vector<double> y(32);
  for (std::size_t i = 0; i < 32; ++i) y[i] = std::sin(s.at(i, 0)) + a.at(i, 0);
  const double first = sac::critic_update<double>(critics, s, a, y, {});
  double last = first;
  for (int k = 0; k < 99; ++k) last = sac::critic_update<double>(critics, s, a, y, {});
  CHECK(last < first);
  CHECK(critics.updates == 100);
  CHECK(critics.ema_applications == 50);
}

TEST_CASE("critic loss gradient matches finite differences") {
  auto q = small_net<double>({3, 4, 1}, ndgrad::HeadKind::plain, 22);
  auto s = random_matrix<double>(5, 2, 23);
  auto a = random_matrix<double>(5, 1, 24);
  auto y = random_matrix<double>(5, 1, 25);
  auto target = Tensor<double>::from({5}, std::vector<double>(y.data().begin(), y.data().end()));
  const double err = testing::gradcheck(q.parameters(), [&] {
    return ndgrad::mean(ndgrad::square(ndgrad::sub(sac::q_value(q, s, a), target)));
  });
  CHECK(err <= 1e-4);
}

TEST_CASE("targets receive no gradient from the critic loss") {
  sac::CriticPair<double> critics(small_net<double>({4, 6, 1}, ndgrad::HeadKind::plain, 26),
                                  small_net<double>({4, 6, 1}, ndgrad::HeadKind::plain, 27), {});
  auto s = random_matrix<double>(8, 3, 28);
  auto a = random_matrix<double>(8, 1, 29);
  const std::vector<double> y(8, 1.0);
  sac::critic_update<double>(critics, s, a, y, {});
  for (const auto& p : critics.target1.parameters()) CHECK_FALSE(p.has_grad());
  for (const auto& p : critics.target2.parameters()) CHECK_FALSE(p.has_grad());
}

TEST_CASE("temperature is stationary at the target entropy") {
  sac::Temperature<double> temp(0.1, -1.0, true, {});
  const std::vector<double> lp{1.0, 1.0, 1.0};
  const double before = temp.beta();
  CHECK(sac::temperature_update<double>(temp, lp) == before);
}

TEST_CASE("temperature rises when entropy is below target") {
  sac::Temperature<double> temp(0.1, -1.0, true, {});
  const std::vector<double> lp{5.0, 4.0};
  CHECK(sac::temperature_update<double>(temp, lp) > 0.1);
  sac::Temperature<double> frozen(0.1, -1.0, false, {});
  CHECK(sac::temperature_update<double>(frozen, lp) == frozen.beta());
}

TEST_CASE("temperature follows a scalar adam oracle") {
  sac::Temperature<double> temp(0.1, -1.0, true, {});
  const std::vector<std::vector<double>> batches{{2.0, 3.0}, {-1.0, 0.5}, {4.0, 4.0}};
  double lb = std::log(0.1), m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    const auto& lp = batches[t - 1];
    sac::temperature_update<double>(temp, lp);
    const double c = ((lp[0] - 1.0) + (lp[1] - 1.0)) / 2.0;
    const double g = -std::exp(lb) * c;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    lb -= 1e-4 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    CHECK_THAT(temp.log_beta.item(), WithinAbs(lb, 1e-10));
  }
}

TEST_CASE("soft update") {
  auto online = small_net<double>({2, 3, 1}, ndgrad::HeadKind::plain, 30);
  auto same = online.clone();
  sac::soft_update(online, same, 0.01);
  for (std::size_t i = 0; i < online.parameters().size(); ++i) {
    const auto a = online.parameters()[i].data(), b = same.parameters()[i].data();
    for (std::size_t k = 0; k < a.size(); ++k) CHECK_THAT(b[k], WithinAbs(a[k], 1e-15));
  }
  auto one = online.clone();
  auto zero = online.clone();
  for (auto& p : one.parameters())
    for (auto& v : p.mutable_data()) v = 1.0;
  zero_all(zero);
  sac::soft_update(one, zero, 0.01);
  CHECK_THAT(zero.parameters()[0].data()[0], WithinAbs(0.01, 1e-15));
  for (int k = 1; k < 68; ++k) sac::soft_update(one, zero, 0.01);
  CHECK(1.0 - zero.parameters()[0].data()[0] > 0.5);
  sac::soft_update(one, zero, 0.01);
  CHECK(1.0 - zero.parameters()[0].data()[0] < 0.5);
  CHECK_THAT(1.0 - zero.parameters()[0].data()[0], WithinAbs(std::pow(0.99, 69), 1e-12));
}

TEST_CASE("update cadence counters") {
  for (bool sac_mode : {true, false}) {
    auto agent = tiny_agent(sac_mode);
    Rng rng(31);
    for (std::uint64_t k = 0; k < 11; ++k) gradient_step(agent, random_batch(8, k), rng);
    CHECK(agent.critics.updates == 11);
    CHECK(agent.actor_updates == 5);
    CHECK(agent.critics.ema_applications == 5);
  }
}

TEST_CASE("replayed-action entropy term uses the stored action") {
  auto policy = small_net<double>({3, 6, 2}, ndgrad::HeadKind::gaussian, 32);
  sac::CriticPair<double> critics(small_net<double>({4, 6, 1}, ndgrad::HeadKind::plain, 33),
                                  small_net<double>({4, 6, 1}, ndgrad::HeadKind::plain, 34), {});
  critics.set_online_requires_grad(false);
  auto s = random_matrix<double>(4, 3, 35);
  auto a = Tensor<double>::from({4, 1}, std::vector<double>{0.1, -0.5, 0.9, 0.0});
  Rng r1(36), r2(36);
  auto replayed = sac::soft_actor_terms(policy, critics, s, s, s, a, 0.3, 0.99, {}, sac::EntropySample::replayed, r1);
  auto expected_lp = sac::policy_log_prob(policy, s, a, {});
  auto next = sac::sample_policy(policy, s, {}, r2);
  auto min_q = ndgrad::minimum(sac::q_value(critics.q1, s, next.action), sac::q_value(critics.q2, s, next.action));
  for (std::size_t i = 0; i < 4; ++i) {
    const double e = -0.3 * expected_lp[i] + 0.99 * (min_q[i] - 0.3 * next.log_prob[i]);
    CHECK_THAT(replayed.per_sample[i], WithinAbs(e, 1e-12));
  }
}
