#pragma once

#include <cmath>
#include <numbers>

#include "terl/ndgrad/ops.hpp"

namespace terl::ndgrad {

/// Bounds applied to every diagonal-Gaussian head before its log-std is used.
struct LogStdBounds {
  double lo = -10.0;
  double hi = 2.0;
};

/// Guard inside log(1 - tanh(u)^2 + eps) of the squashing correction.
inline constexpr double kSquashEpsilon = 1e-6;

/// Diagonal Gaussian log-density, summed over the feature axis: [batch, d] -> [batch].
template <typename T>
Tensor<T> gaussian_log_prob(const Tensor<T>& x, const Tensor<T>& mean, const Tensor<T>& log_std) {
  detail::require_same_shape(x, mean, "gaussian_log_prob");
  detail::require_same_shape(x, log_std, "gaussian_log_prob");
  const T half_log_two_pi = static_cast<T>(0.5 * std::log(2.0 * std::numbers::pi));
  auto standardized = mul(sub(x, mean), exp(scale(log_std, T{-1})));
  auto per_dim = sub(scale(square(standardized), T{-0.5}), log_std);
  return add_scalar(sum_cols(per_dim), -half_log_two_pi * static_cast<T>(x.cols()));
}

template <typename T>
struct Squashed {
  Tensor<T> action;    // tanh(u), in (-1, 1)
  Tensor<T> log_prob;  // [batch]
};

/// Pushes a pre-squash Gaussian sample u through tanh and corrects its density.
template <typename T>
Squashed<T> tanh_squash_log_prob(const Tensor<T>& u, const Tensor<T>& mean, const Tensor<T>& log_std) {
  auto a = tanh(u);
  auto correction = sum_cols(log(add_scalar(scale(square(a), T{-1}), T{1} + static_cast<T>(kSquashEpsilon))));
  return {a, sub(gaussian_log_prob(u, mean, log_std), correction)};
}

/// Splits a Gaussian head output [batch, 2d] into (mean, clamped log-std).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_gaussian_head(const Tensor<T>& out, LogStdBounds bounds) {
  const std::size_t d = out.cols() / 2;
  if (d == 0 || out.cols() % 2 != 0) {
    throw ContractViolation("gaussian head width must be even, got " + shape_str(out.shape()));
  }
  return {slice_cols(out, 0, d),
          clamp(slice_cols(out, d, 2 * d), static_cast<T>(bounds.lo), static_cast<T>(bounds.hi))};
}

}  // namespace terl::ndgrad
