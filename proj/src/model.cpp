#include "msb/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "msb/rng.hpp"

namespace msb {

void Hyperparams::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be positive");
  if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("Inverse-Gamma shape a must be positive");
  if (!(b > 0.0) || !std::isfinite(b)) throw std::invalid_argument("Inverse-Gamma scale b must be positive");
  if (max_iters == 0) throw std::invalid_argument("max_iters must be positive");
  if (burn_in >= max_iters) throw std::invalid_argument("burn_in must be smaller than max_iters");
}

std::vector<double> path_weights(std::span<const NodeParams> nodes, std::span<const NodeId> path) {
  std::vector<double> pi(path.size());
  double remaining = 1.0;
  for (std::size_t j = 0; j < path.size(); ++j) {
    const double v = nodes[path[j]].stick;
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("stick length " + std::to_string(v) + " outside [0, 1]");
    pi[j] = v * remaining;
    remaining *= 1.0 - v;
  }
  return pi;
}

void check_path(const PartitionTree& tree, std::span<const NodeId> path) {
  if (path.empty() || path.front() != 0) throw std::invalid_argument("path must start at the root");
  for (std::size_t j = 1; j < path.size(); ++j) {
    const auto& parent = tree.node(path[j]).parent;
    if (!parent || *parent != path[j - 1]) throw std::invalid_argument("path is not a parent/child chain");
  }
  if (!tree.node(path.back()).is_leaf()) throw std::invalid_argument("path must end at a leaf");
}

std::vector<double> path_weights(const PartitionTree& tree, const MsbState& state, std::span<const NodeId> path) {
  check_path(tree, path);
  if (state.nodes.size() != tree.size()) throw std::invalid_argument("state does not match tree size");
  if (state.nodes[path.back()].stick != 1.0) throw std::invalid_argument("leaf stick must equal 1");
  return path_weights(state.nodes, path);
}

MsbState sample_prior(const PartitionTree& tree, const Hyperparams& hyper, std::uint64_t seed) {
  hyper.validate();
  MsbState state;
  state.nodes.resize(tree.size());
  for (NodeId id = 0; id < tree.size(); ++id) {
    Rng rng = Rng::stream(seed, {id});
    NodeParams& node = state.nodes[id];
    node.stick = tree.node(id).is_leaf() ? 1.0 : rng.beta(1.0, hyper.alpha);
    node.mean = rng.normal();
    node.variance = rng.inv_gamma(hyper.a, hyper.b);
  }
  return state;
}

double log_node_density(const NodeParams& params, double y) {
  if (!(params.variance > 0.0)) throw std::invalid_argument("node variance must be positive");
  const double d = y - params.mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * params.variance) - 0.5 * d * d / params.variance;
}

}  // namespace msb
