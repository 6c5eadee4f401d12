#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "terl/ndgrad/distributions.hpp"
#include "terl/ndgrad/ops.hpp"

namespace terl::ndgrad {

enum class HeadKind { plain, gaussian };

/// Layer widths are {input, hidden..., output}; hidden layers use ReLU.
struct MlpSpec {
  std::vector<std::size_t> widths;
  HeadKind head = HeadKind::plain;

  void validate() const {
    if (widths.size() < 3) throw ContractViolation("mlp needs at least one hidden layer");
    for (std::size_t w : widths)
      if (w == 0) throw ContractViolation("mlp layer widths must be positive");
    if (head == HeadKind::gaussian && widths.back() % 2 != 0) {
      throw ContractViolation("gaussian head output width must be even");
    }
  }
  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }
};

template <typename T>
class Mlp {
 public:
  Mlp() = default;

  /// Weights and biases drawn uniformly from +-1/sqrt(fan_in).
  template <typename Rng>
  Mlp(MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
    spec_.validate();
    for (std::size_t l = 0; l + 1 < spec_.widths.size(); ++l) {
      const std::size_t in = spec_.widths[l], out = spec_.widths[l + 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      std::vector<T> w(in * out), b(out);
      for (auto& v : w) v = static_cast<T>(dist(rng));
      for (auto& v : b) v = static_cast<T>(dist(rng));
      weights_.push_back(Tensor<T>::from({in, out}, std::move(w), true));
      biases_.push_back(Tensor<T>::from({out}, std::move(b), true));
    }
  }

  /// Builds a network around existing parameter tensors (used by checkpoint loading and tests).
  Mlp(MlpSpec spec, std::vector<Tensor<T>> weights, std::vector<Tensor<T>> biases)
      : spec_(std::move(spec)), weights_(std::move(weights)), biases_(std::move(biases)) {
    spec_.validate();
    if (weights_.size() + 1 != spec_.widths.size() || biases_.size() != weights_.size()) {
      throw ContractViolation("mlp parameter count does not match spec");
    }
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      if (weights_[l].shape() != Shape{spec_.widths[l], spec_.widths[l + 1]} ||
          biases_[l].shape() != Shape{spec_.widths[l + 1]}) {
        throw ContractViolation("mlp layer " + std::to_string(l) + " parameters do not match spec");
      }
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.rank() != 2 || x.cols() != spec_.input_dim()) {
      throw ContractViolation("mlp layer 0: input " + shape_str(x.shape()) + " but layer expects width " +
                              std::to_string(spec_.input_dim()));
    }
    Tensor<T> h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      h = linear(h, weights_[l], biases_[l], "mlp layer " + std::to_string(l));
      if (l + 1 < weights_.size()) h = relu(h);
    }
    return h;
  }

  /// Mean and clamped log-std of a Gaussian head.
  std::pair<Tensor<T>, Tensor<T>> forward_gaussian(const Tensor<T>& x, LogStdBounds bounds) const {
    if (spec_.head != HeadKind::gaussian) throw ContractViolation("forward_gaussian on a plain-head mlp");
    return split_gaussian_head(forward(x), bounds);
  }

  const MlpSpec& spec() const { return spec_; }

  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(weights_[l]);
      out.push_back(biases_[l]);
    }
    return out;
  }

  std::vector<std::pair<std::string, Tensor<T>>> named_parameters(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.emplace_back(prefix + "/w" + std::to_string(l), weights_[l]);
      out.emplace_back(prefix + "/b" + std::to_string(l), biases_[l]);
    }
    return out;
  }

  void set_requires_grad(bool flag) {
    for (auto& p : parameters()) p.set_requires_grad(flag);
  }

  void zero_grad() {
    for (auto& p : parameters()) p.zero_grad();
  }

  /// Independent copy with fresh parameter storage.
  Mlp clone() const {
    std::vector<Tensor<T>> w, b;
    for (const auto& t : weights_) w.push_back(t.clone());
    for (const auto& t : biases_) b.push_back(t.clone());
    return Mlp(spec_, std::move(w), std::move(b));
  }

  void copy_from(const Mlp& other) {
    auto dst = parameters();
    auto src = other.parameters();
    if (dst.size() != src.size()) throw ContractViolation("copy_from: architecture mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (dst[i].shape() != src[i].shape()) throw ContractViolation("copy_from: architecture mismatch");
      std::copy(src[i].data().begin(), src[i].data().end(), dst[i].mutable_data().begin());
    }
  }

 private:
  MlpSpec spec_;
  std::vector<Tensor<T>> weights_;
  std::vector<Tensor<T>> biases_;
};

}  // namespace terl::ndgrad
