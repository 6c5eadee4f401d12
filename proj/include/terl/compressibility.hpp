#pragma once

#include <zlib.h>

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "terl/ndgrad/serialize.hpp"
#include "terl/ndgrad/tensor.hpp"

namespace terl::compress {

using ndgrad::ContractViolation;
using ndgrad::FormatError;

/// Time-ordered states and actions of one evaluation episode.
struct TrajectoryRecord {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<double> states;   // [steps, state_dim]
  std::vector<double> actions;  // [steps, action_dim]
  std::string env;
  std::uint64_t seed = 0;
  std::string method;
  double alpha = 0.0;

  std::size_t steps() const { return state_dim ? states.size() / state_dim : 0; }

  void append(std::span<const double> state, std::span<const double> action) {
    if (state.size() != state_dim || action.size() != action_dim) {
      throw ContractViolation("trajectory step has the wrong width");
    }
    states.insert(states.end(), state.begin(), state.end());
    actions.insert(actions.end(), action.begin(), action.end());
  }
};

/// Round to one decimal place, ties to even on the scaled value.
inline double round_one_decimal(double v) {
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double r = std::nearbyint(v * 10.0) / 10.0;
  std::fesetround(saved);
  return r;
}

inline constexpr char kTrajectoryMagic[4] = {'T', 'R', 'J', '1'};
inline constexpr std::size_t kTrajectoryHeaderBytes = 16;

/// Header (magic, u32 state dim, u32 action dim, u32 episode count) followed by the rounded rows
/// [state | action] of every episode as little-endian f32, episodes concatenated.
inline std::string round_serialize(const std::vector<TrajectoryRecord>& records) {
  if (records.empty()) throw ContractViolation("round_serialize: no trajectories");
  const std::size_t sd = records.front().state_dim, ad = records.front().action_dim;
  for (const auto& r : records) {
    if (r.state_dim != sd || r.action_dim != ad) {
      throw ContractViolation("round_serialize: trajectories disagree on state/action dimensions");
    }
    if (r.states.size() != r.steps() * sd || r.actions.size() != r.steps() * ad) {
      throw ContractViolation("round_serialize: states and actions are not time-aligned");
    }
  }
  std::ostringstream os(std::ios::binary);
  os.write(kTrajectoryMagic, 4);
  ndgrad::io::put_u32(os, static_cast<std::uint32_t>(sd));
  ndgrad::io::put_u32(os, static_cast<std::uint32_t>(ad));
  ndgrad::io::put_u32(os, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    for (std::size_t t = 0; t < r.steps(); ++t) {
      for (std::size_t i = 0; i < sd; ++i) ndgrad::io::put_f32(os, static_cast<float>(round_one_decimal(r.states[t * sd + i])));
      for (std::size_t i = 0; i < ad; ++i) ndgrad::io::put_f32(os, static_cast<float>(round_one_decimal(r.actions[t * ad + i])));
    }
  }
  return os.str();
}

/// Parsed trajectory file: the rounded row matrix.
struct TrajectoryMatrix {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t episodes = 0;
  std::vector<float> rows;  // [total_steps, state_dim + action_dim]

  std::size_t row_width() const { return state_dim + action_dim; }
  std::size_t total_steps() const { return row_width() ? rows.size() / row_width() : 0; }

  /// Splits back into equal-length episodes.
  std::vector<TrajectoryRecord> to_records() const {
    std::vector<TrajectoryRecord> out;
    if (episodes == 0) return out;
    const std::size_t per = total_steps() / episodes;
    for (std::size_t e = 0; e < episodes; ++e) {
      TrajectoryRecord r;
      r.state_dim = state_dim;
      r.action_dim = action_dim;
      for (std::size_t t = 0; t < per; ++t) {
        const float* row = rows.data() + (e * per + t) * row_width();
        r.states.insert(r.states.end(), row, row + state_dim);
        r.actions.insert(r.actions.end(), row + state_dim, row + row_width());
      }
      out.push_back(std::move(r));
    }
    return out;
  }
};

inline TrajectoryMatrix parse_trajectories(const std::string& bytes) {
  if (bytes.size() < kTrajectoryHeaderBytes || !std::equal(kTrajectoryMagic, kTrajectoryMagic + 4, bytes.begin())) {
    throw FormatError("not a trajectory file (bad magic or short header)");
  }
  std::istringstream is(bytes, std::ios::binary);
  is.seekg(4);
  TrajectoryMatrix m;
  m.state_dim = ndgrad::io::get_u32(is, "state dim");
  m.action_dim = ndgrad::io::get_u32(is, "action dim");
  m.episodes = ndgrad::io::get_u32(is, "episode count");
  const std::size_t payload = bytes.size() - kTrajectoryHeaderBytes;
  const std::size_t row_bytes = 4 * m.row_width();
  if (row_bytes == 0 || payload % row_bytes != 0) throw FormatError("trajectory payload is not a whole number of rows");
  if (m.episodes == 0 || (payload / row_bytes) % m.episodes != 0) {
    throw FormatError("trajectory rows do not split evenly into episodes");
  }
  m.rows.resize(payload / 4);
  for (auto& v : m.rows) v = ndgrad::io::get_f32(is, "payload");
  return m;
}

/// Fixed compressor identity reported alongside sizes.
inline std::string compressor_id() { return std::string("zlib-deflate-level9/") + zlibVersion(); }

inline std::string deflate(const std::string& bytes) {
  uLongf cap = compressBound(static_cast<uLong>(bytes.size()));
  std::string out(cap, '\0');
  const int rc = compress2(reinterpret_cast<Bytef*>(out.data()), &cap, reinterpret_cast<const Bytef*>(bytes.data()),
                           static_cast<uLong>(bytes.size()), Z_BEST_COMPRESSION);
  if (rc != Z_OK) throw std::runtime_error("zlib compress2 failed with code " + std::to_string(rc));
  out.resize(cap);
  return out;
}

inline std::string inflate(const std::string& compressed, std::size_t original_size) {
  std::string out(original_size, '\0');
  uLongf len = static_cast<uLongf>(original_size);
  const int rc = uncompress(reinterpret_cast<Bytef*>(out.data()), &len,
                            reinterpret_cast<const Bytef*>(compressed.data()), static_cast<uLong>(compressed.size()));
  if (rc != Z_OK || len != original_size) throw std::runtime_error("zlib uncompress failed with code " + std::to_string(rc));
  return out;
}

/// Size of the losslessly compressed stream; the roundtrip is checked on every call.
inline std::size_t compress_size(const std::string& bytes) {
  if (bytes.empty()) throw ContractViolation("compress_size: empty input");
  const std::string packed = deflate(bytes);
  if (inflate(packed, bytes.size()) != bytes) throw std::runtime_error("compression roundtrip mismatch");
  return packed.size();
}

/// Each method's mean size divided by the largest mean.
inline std::map<std::string, double> normalized_bytes(const std::map<std::string, double>& mean_sizes) {
  if (mean_sizes.empty()) throw ContractViolation("normalized_bytes: no methods");
  double largest = 0.0;
  for (const auto& [_, v] : mean_sizes) largest = std::max(largest, v);
  if (!(largest > 0.0)) throw ContractViolation("normalized_bytes: sizes must be positive");
  std::map<std::string, double> out;
  for (const auto& [k, v] : mean_sizes) out[k] = v / largest;
  return out;
}

struct CompressionRow {
  std::string method;
  std::uint64_t seed = 0;
  std::size_t raw_bytes = 0;
  std::size_t compressed_bytes = 0;
  double normalized = 0.0;
};

struct CompressionReport {
  std::string compressor = compressor_id();
  std::vector<CompressionRow> rows;
  std::map<std::string, double> mean_compressed;
  std::map<std::string, double> normalized;
};

struct CompressionInput {
  std::string method;
  std::uint64_t seed = 0;
  std::string trajectory_bytes;  // output of round_serialize
};

/// Row-level normalized = compressed bytes / largest per-method mean.
inline CompressionReport build_compression_report(const std::vector<CompressionInput>& inputs) {
  if (inputs.empty()) throw ContractViolation("compression report: no inputs");
  CompressionReport rep;
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& in : inputs) {
    CompressionRow row{in.method, in.seed, in.trajectory_bytes.size(), compress_size(in.trajectory_bytes), 0.0};
    acc[in.method].first += static_cast<double>(row.compressed_bytes);
    acc[in.method].second += 1;
    rep.rows.push_back(row);
  }
  for (const auto& [m, p] : acc) rep.mean_compressed[m] = p.first / static_cast<double>(p.second);
  rep.normalized = normalized_bytes(rep.mean_compressed);
  double largest = 0.0;
  for (const auto& [_, v] : rep.mean_compressed) largest = std::max(largest, v);
  for (auto& row : rep.rows) row.normalized = static_cast<double>(row.compressed_bytes) / largest;
  return rep;
}

}  // namespace terl::compress
