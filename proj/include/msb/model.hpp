#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "msb/ptree.hpp"

namespace msb {

struct Hyperparams {
  double alpha = 1.0;  // stick-breaking concentration
  double a = 3.0;      // Inverse-Gamma shape for node variances
  double b = 1.0;      // Inverse-Gamma scale
  std::size_t max_iters = 20000;
  std::size_t burn_in = 1000;

  // Throws std::invalid_argument for non-positive or inconsistent values.
  void validate() const;
  bool operator==(const Hyperparams&) const = default;
};

/// Stick length, mean and variance of one node, in whitened y units.
struct NodeParams {
  double stick = 1.0;
  double mean = 0.0;
  double variance = 1.0;

  bool operator==(const NodeParams&) const = default;
};

struct MsbState {
  std::vector<NodeParams> nodes;       // indexed by tree node id
  std::vector<std::uint32_t> levels;   // scale label per observation

  bool operator==(const MsbState&) const = default;
};

/// Weights V_j * prod_{i<j} (1 - V_i) along a root-to-leaf path.
std::vector<double> path_weights(std::span<const NodeParams> nodes, std::span<const NodeId> path);
// Same, after checking that `path` is a root-to-leaf path of `tree`.
std::vector<double> path_weights(const PartitionTree& tree, const MsbState& state, std::span<const NodeId> path);

/// Independent prior draws for every node; leaves get stick 1.
MsbState sample_prior(const PartitionTree& tree, const Hyperparams& hyper, std::uint64_t seed);

double log_node_density(const NodeParams& params, double y);

// Checks a root-to-leaf path against the tree; throws std::invalid_argument.
void check_path(const PartitionTree& tree, std::span<const NodeId> path);

}  // namespace msb
