#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "terl/ndgrad/tensor.hpp"
#include "terl/rng.hpp"

namespace terl::replay {

using ndgrad::ContractViolation;

/// One stored step. Actions are normalized to [-1, 1]; a_prev is zero exactly on the first step.
struct Transition {
  std::vector<float> s;
  std::vector<float> a;
  float r = 0.0f;
  std::vector<float> s_next;
  bool done = false;
  std::vector<float> a_prev;
  bool is_first = false;
  // Bookkeeping for alignment checks.
  std::uint64_t episode = 0;
  std::uint64_t step = 0;
};

/// Struct-of-arrays minibatch, row-major per field.
struct Batch {
  std::size_t size = 0;
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;
  std::vector<float> s, a, r, s_next, done, a_prev, is_first;
  std::vector<std::size_t> indices;
};

class ReplayBuffer {
 public:
  static constexpr std::size_t kDefaultCapacity = 1'000'000;

  ReplayBuffer(std::size_t obs_dim, std::size_t act_dim, std::size_t capacity = kDefaultCapacity)
      : obs_dim_(obs_dim), act_dim_(act_dim), capacity_(capacity) {
    if (capacity == 0 || obs_dim == 0 || act_dim == 0) throw ContractViolation("replay buffer dims must be positive");
  }

  void push(const Transition& t) {
    if (t.s.size() != obs_dim_ || t.s_next.size() != obs_dim_ || t.a.size() != act_dim_ ||
        t.a_prev.size() != act_dim_) {
      throw ContractViolation("transition shape does not match buffer (obs " + std::to_string(obs_dim_) +
                              ", act " + std::to_string(act_dim_) + ")");
    }
    const bool prev_zero = std::all_of(t.a_prev.begin(), t.a_prev.end(), [](float v) { return v == 0.0f; });
    if (t.is_first && !prev_zero) throw ContractViolation("first-step transition must carry a zero previous action");
    auto in_bounds = [](const std::vector<float>& v) {
      return std::all_of(v.begin(), v.end(), [](float x) { return x >= -1.0f && x <= 1.0f; });
    };
    if (!in_bounds(t.a) || !in_bounds(t.a_prev)) throw ContractViolation("transition action outside [-1, 1]");

    if (items_.size() < capacity_) {
      items_.push_back(t);
    } else {
      items_[cursor_] = t;
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  /// Uniform sampling with replacement.
  Batch sample(std::size_t batch_size, Rng& rng) const {
    if (batch_size == 0) throw ContractViolation("batch size must be positive");
    if (items_.size() < batch_size) {
      throw std::runtime_error("replay buffer holds " + std::to_string(items_.size()) +
                               " transitions, cannot sample a batch of " + std::to_string(batch_size));
    }
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    Batch b;
    b.size = batch_size;
    b.obs_dim = obs_dim_;
    b.act_dim = act_dim_;
    b.indices.resize(batch_size);
    for (auto& i : b.indices) i = pick(rng);
    gather(b);
    return b;
  }

  /// Batch built from explicit slots (oldest-first order not implied).
  Batch gather(std::span<const std::size_t> slots) const {
    Batch b;
    b.size = slots.size();
    b.obs_dim = obs_dim_;
    b.act_dim = act_dim_;
    b.indices.assign(slots.begin(), slots.end());
    for (std::size_t i : b.indices)
      if (i >= items_.size()) throw ContractViolation("gather: slot out of range");
    gather(b);
    return b;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t act_dim() const { return act_dim_; }

  /// Contents from oldest to newest.
  std::vector<Transition> contents() const {
    std::vector<Transition> out;
    const std::size_t n = items_.size();
    const std::size_t start = n < capacity_ ? 0 : cursor_;
    for (std::size_t k = 0; k < n; ++k) out.push_back(items_[(start + k) % n]);
    return out;
  }

 private:
  void gather(Batch& b) const {
    b.s.clear();
    b.a.clear();
    b.r.clear();
    b.s_next.clear();
    b.done.clear();
    b.a_prev.clear();
    b.is_first.clear();
    for (std::size_t i : b.indices) {
      const Transition& t = items_[i];
      b.s.insert(b.s.end(), t.s.begin(), t.s.end());
      b.a.insert(b.a.end(), t.a.begin(), t.a.end());
      b.r.push_back(t.r);
      b.s_next.insert(b.s_next.end(), t.s_next.begin(), t.s_next.end());
      b.done.push_back(t.done ? 1.0f : 0.0f);
      b.a_prev.insert(b.a_prev.end(), t.a_prev.begin(), t.a_prev.end());
      b.is_first.push_back(t.is_first ? 1.0f : 0.0f);
    }
  }

  std::size_t obs_dim_, act_dim_, capacity_;
  std::vector<Transition> items_;
  std::size_t cursor_ = 0;
};

/// Threads the previous action through a rollout so each transition knows a_{t-1}.
class EpisodeTracker {
 public:
  explicit EpisodeTracker(std::size_t act_dim) : act_dim_(act_dim), prev_(act_dim, 0.0f) {}

  void begin_episode() {
    ++episode_;
    next_step_ = 0;
    std::fill(prev_.begin(), prev_.end(), 0.0f);
    started_ = true;
  }

  /// Builds the transition for step `step` (0-based within the episode).
  Transition record(std::uint64_t step, std::vector<float> s, std::vector<float> a, float r,
                    std::vector<float> s_next, bool done) {
    if (!started_) throw ContractViolation("episode tracker: record() before begin_episode()");
    if (step != next_step_) {
      throw ContractViolation("episode tracker: expected step " + std::to_string(next_step_) + ", got " +
                              std::to_string(step));
    }
    if (a.size() != act_dim_) throw ContractViolation("episode tracker: action width mismatch");
    Transition t;
    t.is_first = step == 0;
    t.a_prev = prev_;
    t.s = std::move(s);
    t.a = std::move(a);
    t.r = r;
    t.s_next = std::move(s_next);
    t.done = done;
    t.episode = episode_;
    t.step = step;
    prev_ = t.a;
    ++next_step_;
    return t;
  }

 private:
  std::size_t act_dim_;
  std::vector<float> prev_;
  std::uint64_t episode_ = 0;
  std::uint64_t next_step_ = 0;
  bool started_ = false;
};

}  // namespace terl::replay
