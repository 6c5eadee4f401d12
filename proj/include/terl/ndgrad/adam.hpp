#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "terl/ndgrad/tensor.hpp"

namespace terl::ndgrad {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment estimates for one parameter array.
template <typename T>
struct AdamState {
  std::uint64_t step_count = 0;
  std::vector<T> m;
  std::vector<T> v;
  AdamHyper hyper;
};

/// One bias-corrected Adam step on a raw parameter array.
template <typename T>
void adam_update(AdamState<T>& state, std::span<T> params, std::span<const T> grads) {
  if (params.size() != grads.size()) throw ContractViolation("adam_update: parameter/gradient size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), T{0});
    state.v.assign(params.size(), T{0});
  }
  if (state.m.size() != params.size()) throw ContractViolation("adam_update: moment size mismatch");
  const auto& h = state.hyper;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(h.beta1, t)));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(h.beta2, t)));
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  const T lr = static_cast<T>(h.lr), eps = static_cast<T>(h.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    state.m[i] = b1 * state.m[i] + (T{1} - b1) * g;
    state.v[i] = b2 * state.v[i] + (T{1} - b2) * g * g;
    params[i] -= lr * (state.m[i] * c1) / (std::sqrt(state.v[i] * c2) + eps);
  }
}

/// Adam over a fixed set of parameter tensors. Parameters without a gradient get a zero step.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Tensor<T>> params, AdamHyper hyper) : params_(std::move(params)) {
    states_.resize(params_.size());
    for (auto& s : states_) s.hyper = hyper;
  }

  void step() {
    std::vector<T> zeros;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (p.has_grad()) {
        adam_update<T>(states_[i], p.mutable_data(), p.grad());
      } else {
        zeros.assign(p.size(), T{0});
        adam_update<T>(states_[i], p.mutable_data(), zeros);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::uint64_t step_count() const { return states_.empty() ? 0 : states_.front().step_count; }
  const std::vector<Tensor<T>>& parameters() const { return params_; }
  const std::vector<AdamState<T>>& states() const { return states_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<AdamState<T>> states_;
};

}  // namespace terl::ndgrad
