#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "terl/agent.hpp"
#include "terl/ndgrad.hpp"

namespace terl::checkpoint {

inline constexpr char kMagic[4] = {'T', 'E', 'R', 'L'};
inline constexpr std::uint32_t kVersion = 1;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename T>
void save(const std::filesystem::path& path, const ndgrad::NamedTensors<T>& tensors) {
  std::ostringstream os(std::ios::binary);
  os.write(kMagic, 4);
  ndgrad::io::put_u32(os, kVersion);
  ndgrad::write_tensor_block(os, tensors);
  const std::string bytes = os.str();
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot open checkpoint for writing: " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError("failed writing checkpoint: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Parses the whole file before returning anything.
template <typename T>
std::map<std::string, ndgrad::Tensor<T>> read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  const std::string bytes = buf.str();
  if (bytes.size() < 8 || bytes.compare(0, 4, std::string(kMagic, 4)) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic): " + path.string());
  }
  std::istringstream is(bytes, std::ios::binary);
  is.seekg(4);
  const std::uint32_t version = ndgrad::io::get_u32(is, "version");
  if (version != kVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " not supported (expected " +
                          std::to_string(kVersion) + "): " + path.string());
  }
  ndgrad::NamedTensors<T> entries;
  try {
    entries = ndgrad::read_tensor_block<T>(is);
  } catch (const ndgrad::FormatError& e) {
    throw CheckpointError(std::string("corrupt checkpoint ") + path.string() + ": " + e.what());
  }
  if (is.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes in checkpoint: " + path.string());
  std::map<std::string, ndgrad::Tensor<T>> out;
  for (auto& [name, t] : entries) {
    if (!out.emplace(name, t).second) throw CheckpointError("duplicate tensor '" + name + "' in " + path.string());
  }
  return out;
}

template <typename T>
void save_agent(const std::filesystem::path& path, const AgentBundle<T>& agent) {
  save(path, agent.named_parameters());
}

/// Copies every tensor of the file into an agent of the same architecture; nothing is written on mismatch.
template <typename T>
void load_into(AgentBundle<T>& agent, const std::filesystem::path& path) {
  auto loaded = read<T>(path);
  auto params = agent.named_parameters();
  if (loaded.size() != params.size()) {
    throw CheckpointError("checkpoint " + path.string() + " has " + std::to_string(loaded.size()) +
                          " tensors, agent expects " + std::to_string(params.size()));
  }
  for (const auto& [name, t] : params) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw CheckpointError("checkpoint " + path.string() + " lacks tensor '" + name + "'");
    if (it->second.shape() != t.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + ndgrad::shape_str(it->second.shape()) + ", expected " +
                            ndgrad::shape_str(t.shape()));
    }
  }
  for (auto& [name, t] : params) {
    auto src = loaded.at(name).data();
    std::copy(src.begin(), src.end(), t.mutable_data().begin());
  }
}

/// Rebuilds an MLP from "<prefix>/w<i>", "<prefix>/b<i>" entries.
template <typename T>
std::optional<ndgrad::Mlp<T>> mlp_from(const std::map<std::string, ndgrad::Tensor<T>>& tensors,
                                       const std::string& prefix, ndgrad::HeadKind head) {
  std::vector<ndgrad::Tensor<T>> w, b;
  for (std::size_t l = 0;; ++l) {
    auto wi = tensors.find(prefix + "/w" + std::to_string(l));
    auto bi = tensors.find(prefix + "/b" + std::to_string(l));
    if (wi == tensors.end() || bi == tensors.end()) break;
    w.push_back(wi->second.clone());
    b.push_back(bi->second.clone());
  }
  if (w.empty()) return std::nullopt;
  ndgrad::MlpSpec spec;
  spec.head = head;
  for (const auto& t : w) {
    if (t.rank() != 2) throw CheckpointError("weight of '" + prefix + "' is not a matrix");
    spec.widths.push_back(t.shape()[0]);
  }
  spec.widths.push_back(w.back().shape()[1]);
  try {
    return ndgrad::Mlp<T>(spec, std::move(w), std::move(b));
  } catch (const ndgrad::ContractViolation& e) {
    throw CheckpointError("inconsistent '" + prefix + "' layers: " + e.what());
  }
}

}  // namespace terl::checkpoint
