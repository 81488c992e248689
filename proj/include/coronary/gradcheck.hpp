#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coronary/nn/network.hpp"
#include "coronary/training.hpp"

namespace coronary {

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  double step = 0.0;
  bool kink = false;  // stencil crossed a ReLU / pooling switch at every step tried
};

struct GradCheckReport {
  std::string label;
  std::vector<GradCheckEntry> entries;

  /// Over entries without a kink crossing.
  double max_rel_error() const;
  std::size_t kinks() const;
  /// Entry with the largest relative error.
  const GradCheckEntry& worst() const;
  std::string summary() const;
};

/// |a - n| / max(|a|, |n|, 1e-6).
double relative_error(double analytic, double numeric);

/// Central differences for conv3d, maxpool3d, batchnorm (train and eval), GRU
/// and dense layers on small random inputs, 64-bit.
std::vector<GradCheckReport> check_layers(std::uint64_t seed, double step = 1e-4);

/// Reduced widths for exhaustive checks: conv 2/3/4, GRU 3, FC 5.
nn::Architecture tiny_architecture(nn::ModelKind kind);

/// Sequences of random unit-scale cubes with labels cycling through the
/// joint classes.
Batch toy_batch(const nn::Architecture& arch, const std::vector<int>& lengths, std::uint64_t seed);

/// Compares the batch loss gradient with central differences on every
/// coordinate (max_coords = 0) or on max_coords random ones. Dropout masks
/// are held fixed; BN running statistics are not updated. When the +-step
/// stencil flips a ReLU or pooling decision the coordinate is retried at
/// step/10 and step/100, and marked as a kink if it still flips.
GradCheckReport check_network(nn::Network<double>& net, const Batch& batch, nn::Mode mode, std::uint64_t seed,
                              std::size_t max_coords, double step = 1e-4, const LossSpec& spec = {});

}  // namespace coronary
