#pragma once

#include <Eigen/Core>

#include <cmath>
#include <initializer_list>
#include <string>
#include <vector>

#include "terl/ndgrad/tensor.hpp"

namespace terl::ndgrad {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// Builds an op output. Gradient bookkeeping is attached only when some parent needs it.
template <typename T, typename Fn>
Tensor<T> make_result(Shape shape, Buffer<T> values, std::initializer_list<Tensor<T>> parents, const char* op,
                      Fn&& backward_fn) {
  Tensor<T> out = Tensor<T>::from(std::move(shape), std::move(values));
  bool track = false;
  for (const auto& p : parents) track = track || p.requires_grad();
  if (track) {
    Node<T>& n = out.node();
    n.requires_grad = true;
    n.op = op;
    for (const auto& p : parents) n.parents.push_back(p.node_ptr());
    n.backward_fn = std::forward<Fn>(backward_fn);
  }
  return out;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
  }
}

template <typename T>
void require_matrix(const Tensor<T>& a, const char* op) {
  if (a.rank() != 2) throw ContractViolation(std::string(op) + ": expected rank-2 tensor, got " + shape_str(a.shape()));
}

template <typename T>
void accumulate(Node<T>& parent, std::size_t i, T g) {
  parent.ensure_grad()[i] += g;
}

// Elementwise unary op: forward f(x), backward uses df(x, y).
template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, const char* op, F f, DF df) {
  Buffer<T> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result<T>(x.shape(), std::move(out), {x}, op, [df](Node<T>& n) {
    Node<T>& p = *n.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * df(p.data[i], n.data[i]);
  });
}

}  // namespace detail

/// y = x W + b with x [batch, in], W [in, out], b [out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const std::string& where = "linear") {
  detail::require_matrix(x, "linear");
  detail::require_matrix(w, "linear");
  if (x.cols() != w.rows() || b.size() != w.cols()) {
    throw ContractViolation(where + ": input " + shape_str(x.shape()) + " incompatible with weight " +
                            shape_str(w.shape()) + " / bias " + shape_str(b.shape()));
  }
  const std::size_t batch = x.rows(), in = w.rows(), out = w.cols();
  Buffer<T> values(batch * out);
  {
    detail::MapMat<T> y(values.data(), batch, out);
    detail::ConstMapMat<T> xm(x.data().data(), batch, in);
    detail::ConstMapMat<T> wm(w.data().data(), in, out);
    y.noalias() = xm * wm;
    y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b.data().data(), out);
  }
  return detail::make_result<T>({batch, out}, std::move(values), {x, w, b}, "linear",
                                [batch, in, out](Node<T>& n) {
    Node<T>& xn = *n.parents[0];
    Node<T>& wn = *n.parents[1];
    Node<T>& bn = *n.parents[2];
    detail::ConstMapMat<T> dy(n.grad.data(), batch, out);
    if (xn.requires_grad) {
      detail::MapMat<T> dx(xn.ensure_grad().data(), batch, in);
      dx.noalias() += dy * detail::ConstMapMat<T>(wn.data.data(), in, out).transpose();
    }
    if (wn.requires_grad) {
      detail::MapMat<T> dw(wn.ensure_grad().data(), in, out);
      dw.noalias() += detail::ConstMapMat<T>(xn.data.data(), batch, in).transpose() * dy;
    }
    if (bn.requires_grad) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bn.ensure_grad().data(), out);
      db += dy.colwise().sum();
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(
      x, "relu", [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(
      x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary(
      x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return detail::unary(
      x, "log", [](T v) { return std::log(v); }, [](T v, T) { return T{1} / v; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary(
      x, "square", [](T v) { return v * v; }, [](T v, T) { return T{2} * v; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  return detail::unary(
      x, "scale", [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return detail::unary(
      x, "add_scalar", [c](T v) { return v + c; }, [](T, T) { return T{1}; });
}

/// Hard clamp; gradient is zero where the bound is active.
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return detail::unary(
      x, "clamp", [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T{1} : T{0}; });
}

namespace detail {

template <typename T, typename F, typename DA, typename DB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, const char* op, F f, DA da, DB db) {
  require_same_shape(a, b, op);
  Buffer<T> out(a.size());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
  return make_result<T>(a.shape(), std::move(out), {a, b}, op, [da, db](Node<T>& n) {
    Node<T>& an = *n.parents[0];
    Node<T>& bn = *n.parents[1];
    if (an.requires_grad) {
      auto& g = an.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * da(an.data[i], bn.data[i]);
    }
    if (bn.requires_grad) {
      auto& g = bn.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * db(an.data[i], bn.data[i]);
    }
  });
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T{1}; }, [](T, T) { return T{1}; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T{1}; }, [](T, T) { return T{-1}; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

/// Elementwise minimum; ties route the gradient to the first argument.
template <typename T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, "minimum", [](T x, T y) { return x <= y ? x : y; },
      [](T x, T y) { return x <= y ? T{1} : T{0}; }, [](T x, T y) { return x <= y ? T{0} : T{1}; });
}

/// x * s where s is a one-element tensor (both may carry gradients).
template <typename T>
Tensor<T> mul_by_scalar_tensor(const Tensor<T>& x, const Tensor<T>& s) {
  if (s.size() != 1) throw ContractViolation("mul_by_scalar_tensor: multiplier must have one element");
  const T sv = s.item();
  Buffer<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * sv;
  return detail::make_result<T>(x.shape(), std::move(out), {x, s}, "mul_scalar", [](Node<T>& n) {
    Node<T>& xn = *n.parents[0];
    Node<T>& sn = *n.parents[1];
    if (xn.requires_grad) {
      auto& g = xn.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * sn.data[0];
    }
    if (sn.requires_grad) {
      T acc{0};
      for (std::size_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * xn.data[i];
      sn.ensure_grad()[0] += acc;
    }
  });
}

/// Row sums: [batch, d] -> [batch].
template <typename T>
Tensor<T> sum_cols(const Tensor<T>& x) {
  detail::require_matrix(x, "sum_cols");
  const std::size_t batch = x.rows(), d = x.cols();
  Buffer<T> out(batch, T{0});
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r] += x.data()[r * d + c];
  return detail::make_result<T>({batch}, std::move(out), {x}, "sum_cols", [batch, d](Node<T>& n) {
    Node<T>& p = *n.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t c = 0; c < d; ++c) g[r * d + c] += n.grad[r];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc{0};
  for (T v : x.data()) acc += v;
  return detail::make_result<T>({1}, {acc}, {x}, "sum", [](Node<T>& n) {
    Node<T>& p = *n.parents[0];
    auto& g = p.ensure_grad();
    for (auto& gi : g) gi += n.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const T inv = T{1} / static_cast<T>(x.size());
  T acc{0};
  for (T v : x.data()) acc += v;
  return detail::make_result<T>({1}, {acc * inv}, {x}, "mean", [inv](Node<T>& n) {
    Node<T>& p = *n.parents[0];
    auto& g = p.ensure_grad();
    for (auto& gi : g) gi += n.grad[0] * inv;
  });
}

/// Column-wise concatenation of rank-2 tensors with equal batch size.
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractViolation("concat_cols: no inputs");
  const std::size_t batch = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_matrix(p, "concat_cols");
    if (p.rows() != batch) throw ContractViolation("concat_cols: batch mismatch " + shape_str(p.shape()));
    widths.push_back(p.cols());
    total += p.cols();
  }
  Buffer<T> out(batch * total);
  for (std::size_t r = 0; r < batch; ++r) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      std::copy_n(parts[k].data().data() + r * widths[k], widths[k], out.data() + r * total + off);
      off += widths[k];
    }
  }
  Tensor<T> result = Tensor<T>::from({batch, total}, std::move(out));
  bool track = false;
  for (const auto& p : parts) track = track || p.requires_grad();
  if (track) {
    Node<T>& n = result.node();
    n.requires_grad = true;
    n.op = "concat_cols";
    for (const auto& p : parts) n.parents.push_back(p.node_ptr());
    n.backward_fn = [batch, total, widths](Node<T>& node) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        Node<T>& p = *node.parents[k];
        if (p.requires_grad) {
          auto& g = p.ensure_grad();
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t c = 0; c < widths[k]; ++c) g[r * widths[k] + c] += node.grad[r * total + off + c];
        }
        off += widths[k];
      }
    };
  }
  return result;
}

/// Columns [begin, end) of a rank-2 tensor.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  detail::require_matrix(x, "slice_cols");
  if (begin >= end || end > x.cols()) {
    throw ContractViolation("slice_cols: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                            ") for " + shape_str(x.shape()));
  }
  const std::size_t batch = x.rows(), d = x.cols(), w = end - begin;
  Buffer<T> out(batch * w);
  for (std::size_t r = 0; r < batch; ++r) std::copy_n(x.data().data() + r * d + begin, w, out.data() + r * w);
  return detail::make_result<T>({batch, w}, std::move(out), {x}, "slice_cols", [batch, d, w, begin](Node<T>& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t c = 0; c < w; ++c) g[r * d + begin + c] += n.grad[r * w + c];
  });
}

}  // namespace terl::ndgrad
