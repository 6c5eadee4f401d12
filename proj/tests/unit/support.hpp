#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "terl/ndgrad.hpp"

namespace terl::testing {

using ndgrad::Tensor;

/// |a - n| / max(|a|, |n|, floor)
inline double rel_err(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Largest relative error between backward() and central differences over every entry of `inputs`.
/// `loss` must rebuild the graph from the current input values on each call.
inline double gradcheck(std::vector<Tensor<double>> inputs, const std::function<Tensor<double>()>& loss,
                        double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.size(), 0.0);
    }
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss().item();
      values[i] = saved - h;
      const double down = loss().item();
      values[i] = saved;
      worst = std::max(worst, rel_err(analytic[k][i], (up - down) / (2 * h)));
    }
  }
  return worst;
}

struct GradcheckCase {
  ndgrad::MlpSpec spec;
  std::size_t batch = 0;
  double max_rel_err = 0.0;
};

/// One random network (1-3 hidden layers, plain or Gaussian head) checked against central differences,
/// parameters and inputs included.
inline GradcheckCase random_mlp_gradcheck(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&rng](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  std::normal_distribution<double> normal(0.0, 1.0);
  GradcheckCase c;
  c.spec.head = pick(0, 1) ? ndgrad::HeadKind::gaussian : ndgrad::HeadKind::plain;
  c.spec.widths.push_back(pick(1, 6));
  const std::size_t hidden = pick(1, 3);
  for (std::size_t l = 0; l < hidden; ++l) c.spec.widths.push_back(pick(1, 8));
  const std::size_t out = pick(1, 4);
  c.spec.widths.push_back(c.spec.head == ndgrad::HeadKind::gaussian ? 2 * out : out);
  c.batch = pick(1, 5);

  ndgrad::Mlp<double> net(c.spec, rng);
  auto random_tensor = [&](ndgrad::Shape shape, bool grad) {
    std::vector<double> v(ndgrad::numel(shape));
    for (auto& x : v) x = normal(rng);
    return Tensor<double>::from(std::move(shape), std::move(v), grad);
  };
  auto x = random_tensor({c.batch, c.spec.input_dim()}, true);
  std::vector<Tensor<double>> inputs = net.parameters();
  inputs.push_back(x);

  std::function<Tensor<double>()> loss;
  if (c.spec.head == ndgrad::HeadKind::gaussian) {
    auto target = random_tensor({c.batch, out}, false);
    auto xi = random_tensor({c.batch, out}, false);
    loss = [=] {
      auto [mean, log_std] = net.forward_gaussian(x, ndgrad::LogStdBounds{});
      auto u = ndgrad::add(mean, ndgrad::mul(ndgrad::exp(log_std), xi));
      auto squashed = ndgrad::tanh_squash_log_prob(u, mean, log_std);
      return ndgrad::add(ndgrad::mean(ndgrad::gaussian_log_prob(target, mean, log_std)),
                         ndgrad::sum(ndgrad::mul(squashed.action, squashed.action)));
    };
  } else {
    auto weights = random_tensor({c.batch, out}, false);
    loss = [=] { return ndgrad::sum(ndgrad::mul(ndgrad::tanh(net.forward(x)), weights)); };
  }
  c.max_rel_err = gradcheck(inputs, loss);
  return c;
}

}  // namespace terl::testing
