#pragma once

#include <cstdint>
#include <random>

namespace terl {

using Rng = std::mt19937_64;

/// Stream tags keep the random streams of one run independent of each other.
enum class Stream : std::uint64_t {
  init = 1,
  warmup_actions = 2,
  policy_noise = 3,
  replay = 4,
  train_reset = 5,
  train_env_noise = 6,
  eval_reset = 7,
  eval_env_noise = 8,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream))) + index);
}

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

}  // namespace terl
