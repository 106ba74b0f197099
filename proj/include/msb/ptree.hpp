#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "msb/dataio.hpp"
#include "msb/kgraph.hpp"
#include "msb/types.hpp"

namespace msb {

/// One cell C_{j,k}: `scale` is j (root = 0), `index` is k within the scale.
struct TreeNode {
  std::uint32_t scale = 0;
  std::uint32_t index = 0;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
  std::vector<std::uint32_t> members;  // sorted training indices
  std::vector<double> centroid;        // mean of whitened member rows

  bool is_leaf() const { return children.empty(); }
  bool operator==(const TreeNode&) const = default;
};

struct TreeOptions {
  std::size_t min_leaf = 20;
  std::size_t max_depth = 8;
  double epsilon = 0.05;
  std::uint64_t seed = 0;
};

/// Multiscale partition of the training rows. Node ids follow breadth-first
/// order, so a parent always has a smaller id than its children.
class PartitionTree {
 public:
  PartitionTree() = default;
  PartitionTree(std::vector<TreeNode> nodes, WhitenStats feature_stats);

  std::size_t size() const { return nodes_.size(); }
  std::size_t n_observations() const { return leaf_of_.size(); }
  std::size_t dimension() const { return stats_.size(); }
  std::uint32_t depth() const { return depth_; }

  const TreeNode& node(NodeId id) const;
  std::span<const TreeNode> nodes() const { return nodes_; }
  std::span<const NodeId> leaves() const { return leaves_; }
  const WhitenStats& feature_stats() const { return stats_; }

  // Node ids at scale j in k order.
  std::vector<NodeId> scale_nodes(std::uint32_t scale) const;

  /// Strict ancestors, root first.
  std::vector<NodeId> ancestors(NodeId id) const;
  /// Strict descendants in pre-order.
  std::vector<NodeId> descendants(NodeId id) const;

  /// Root-to-leaf path of training row i under the stored partition.
  std::vector<NodeId> training_path(std::size_t i) const;

  /// Greedy nearest-centroid descent for an already whitened point; ties go
  /// to the lower child id.
  std::vector<NodeId> route(std::span<const double> whitened) const;
  // Whitens with the stored feature stats, then routes.
  std::vector<NodeId> route_raw(std::span<const double> raw) const;

  // Throws std::logic_error when the partition or parent/child structure is broken.
  void check_invariants() const;

  bool operator==(const PartitionTree& other) const;

 private:
  std::vector<TreeNode> nodes_;
  std::vector<NodeId> leaves_;
  std::vector<NodeId> leaf_of_;
  WhitenStats stats_;
  std::uint32_t depth_ = 0;
};

/// Recursive bisection of the similarity graph. A node splits iff it holds at
/// least 2 * min_leaf members and sits above max_depth; disconnected induced
/// subgraphs are first joined through nearest-centroid links.
PartitionTree build_tree(const SparseGraph& g, const Matrix& whitened, const TreeOptions& options,
                         WhitenStats feature_stats = {});

/// Induced subgraph on `members`, joined into one component if needed.
SparseGraph connected_subgraph(const SparseGraph& g, const Matrix& whitened, std::span<const std::uint32_t> members);

void save_tree(const PartitionTree& tree, const std::filesystem::path& path);
PartitionTree load_tree(const std::filesystem::path& path);

inline constexpr std::uint32_t kTreeFormatVersion = 1;

}  // namespace msb
