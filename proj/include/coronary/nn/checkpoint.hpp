#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "coronary/nn/network.hpp"
#include "coronary/nn/tensor.hpp"

namespace coronary::nn {

/// Ordered named f32 tensors. Reserved prefixes: "bn_running/" for BN
/// statistics, "adam/" for optimizer state, "meta/" for the architecture.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(std::string_view name) const;
  const Tensor<float>& at(std::string_view name) const;
  void put(std::string name, Tensor<float> t);
};

void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Parameters, BN running statistics and architecture of `net`.
template <typename T>
Checkpoint snapshot(const Network<T>& net);

Architecture checkpoint_architecture(const Checkpoint& c);

/// Copies parameters and running statistics from `c` into `net`; shapes must
/// match exactly.
template <typename T>
void restore(const Checkpoint& c, Network<T>& net);

Network<float> load_network(const Checkpoint& c);

}  // namespace coronary::nn
