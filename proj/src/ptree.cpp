#include "msb/ptree.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include "binio.hpp"
#include "msb/error.hpp"
#include "msb/partition.hpp"
#include "msb/rng.hpp"

namespace msb {

namespace {

constexpr std::string_view kTreeMagic = "MSBT";

bool same_stats(const WhitenStats& a, const WhitenStats& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    if (a.means[jj] != b.means[jj] || a.sds[jj] != b.sds[jj]) return false;
  }
  return true;
}

std::vector<double> centroid_of(const Matrix& x, std::span<const std::uint32_t> members) {
  const auto p = static_cast<std::size_t>(x.cols());
  std::vector<double> c(p, 0.0);
  for (std::uint32_t i : members) {
    const auto row = row_span(x, i);
    for (std::size_t j = 0; j < p; ++j) c[j] += row[j];
  }
  const double inv = members.empty() ? 0.0 : 1.0 / static_cast<double>(members.size());
  for (double& v : c) v *= inv;
  return c;
}

// Pre-order walk emitting leaf members; records each node's [begin, end) range.
void flatten(const std::vector<TreeNode>& nodes, NodeId id, std::vector<std::uint64_t>& order,
             std::vector<std::pair<std::uint64_t, std::uint64_t>>& ranges) {
  ranges[id].first = order.size();
  const TreeNode& node = nodes[id];
  if (node.is_leaf()) {
    order.insert(order.end(), node.members.begin(), node.members.end());
  } else {
    for (NodeId c : node.children) flatten(nodes, c, order, ranges);
  }
  ranges[id].second = order.size();
}

}  // namespace

PartitionTree::PartitionTree(std::vector<TreeNode> nodes, WhitenStats feature_stats)
    : nodes_(std::move(nodes)), stats_(std::move(feature_stats)) {
  if (nodes_.empty()) throw std::invalid_argument("partition tree needs a root");
  leaf_of_.assign(nodes_[0].members.size(), 0);
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const TreeNode& node = nodes_[id];
    depth_ = std::max(depth_, node.scale);
    if (!node.is_leaf()) continue;
    leaves_.push_back(id);
    for (std::uint32_t i : node.members) {
      if (i >= leaf_of_.size()) throw std::invalid_argument("leaf member index out of range");
      leaf_of_[i] = id;
    }
  }
  if (stats_.size() == 0 && !nodes_[0].centroid.empty()) {
    const auto p = static_cast<Eigen::Index>(nodes_[0].centroid.size());
    stats_.means = Vector::Zero(p);
    stats_.sds = Vector::Ones(p);
  }
}

const TreeNode& PartitionTree::node(NodeId id) const {
  if (id >= nodes_.size()) throw std::out_of_range("unknown tree node id " + std::to_string(id));
  return nodes_[id];
}

std::vector<NodeId> PartitionTree::scale_nodes(std::uint32_t scale) const {
  std::vector<NodeId> out;
  for (NodeId id = 0; id < nodes_.size(); ++id)
    if (nodes_[id].scale == scale) out.push_back(id);
  return out;
}

std::vector<NodeId> PartitionTree::ancestors(NodeId id) const {
  std::vector<NodeId> chain;
  for (auto parent = node(id).parent; parent; parent = nodes_[*parent].parent) chain.push_back(*parent);
  std::reverse(chain.begin(), chain.end());
  return chain;
}

std::vector<NodeId> PartitionTree::descendants(NodeId id) const {
  std::vector<NodeId> out;
  std::vector<NodeId> stack(node(id).children.rbegin(), node(id).children.rend());
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    out.push_back(v);
    const auto& kids = nodes_[v].children;
    stack.insert(stack.end(), kids.rbegin(), kids.rend());
  }
  return out;
}

std::vector<NodeId> PartitionTree::training_path(std::size_t i) const {
  if (i >= leaf_of_.size()) throw std::out_of_range("training index " + std::to_string(i) + " out of range");
  auto path = ancestors(leaf_of_[i]);
  path.push_back(leaf_of_[i]);
  return path;
}

std::vector<NodeId> PartitionTree::route(std::span<const double> whitened) const {
  if (whitened.size() != dimension())
    throw std::invalid_argument("route: point has dimension " + std::to_string(whitened.size()) + ", tree has " +
                                std::to_string(dimension()));
  std::vector<NodeId> path{0};
  NodeId current = 0;
  while (!nodes_[current].is_leaf()) {
    NodeId best = nodes_[current].children.front();
    double best_sq = std::numeric_limits<double>::infinity();
    for (NodeId c : nodes_[current].children) {
      const double sq = squared_distance(whitened, nodes_[c].centroid);
      if (sq < best_sq) {
        best_sq = sq;
        best = c;
      }
    }
    current = best;
    path.push_back(current);
  }
  return path;
}

std::vector<NodeId> PartitionTree::route_raw(std::span<const double> raw) const {
  const auto whitened = apply_whitening(stats_, raw);
  return route(whitened);
}

void PartitionTree::check_invariants() const {
  const TreeNode& root = nodes_.at(0);
  if (root.scale != 0 || root.index != 0 || root.parent) throw std::logic_error("root must be (0, 0) without parent");
  for (std::size_t i = 0; i < root.members.size(); ++i)
    if (root.members[i] != i) throw std::logic_error("root must hold every training index");
  std::vector<std::uint32_t> next_index(depth_ + 2, 0);
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const TreeNode& node = nodes_[id];
    if (node.index != next_index[node.scale]++) throw std::logic_error("scale indices not consecutive");
    if (node.centroid.size() != dimension()) throw std::logic_error("centroid dimension mismatch");
    if (id != 0 && (!node.parent || *node.parent >= id)) throw std::logic_error("bad parent link");
    if (!std::is_sorted(node.members.begin(), node.members.end())) throw std::logic_error("members not sorted");
    if (node.is_leaf()) continue;
    std::vector<std::uint32_t> merged;
    for (NodeId c : node.children) {
      const TreeNode& child = nodes_.at(c);
      if (!child.parent || *child.parent != id || child.scale != node.scale + 1)
        throw std::logic_error("child " + std::to_string(c) + " does not point back to " + std::to_string(id));
      merged.insert(merged.end(), child.members.begin(), child.members.end());
    }
    std::sort(merged.begin(), merged.end());
    if (merged != node.members) throw std::logic_error("children do not partition node " + std::to_string(id));
  }
}

bool PartitionTree::operator==(const PartitionTree& other) const {
  return nodes_ == other.nodes_ && same_stats(stats_, other.stats_);
}

SparseGraph connected_subgraph(const SparseGraph& g, const Matrix& whitened, std::span<const std::uint32_t> members) {
  constexpr auto absent = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> local(g.n_vertices(), absent);
  for (std::uint32_t k = 0; k < members.size(); ++k) local[members[k]] = k;

  std::vector<WeightedEdge> edges;
  double min_weight = 1.0;
  for (std::uint32_t k = 0; k < members.size(); ++k) {
    const auto nb = g.neighbors(members[k]);
    const auto w = g.weights(members[k]);
    for (std::size_t e = 0; e < nb.size(); ++e) {
      const std::uint32_t other = local[nb[e]];
      if (other == absent || other <= k) continue;
      edges.push_back({k, other, w[e]});
      min_weight = std::min(min_weight, w[e]);
    }
  }
  SparseGraph sub = SparseGraph::from_edges(members.size(), edges);
  std::size_t count = 0;
  const auto comp = connected_components(sub, &count);
  if (count <= 1) return sub;

  // Every other component is linked to the largest one: its member nearest
  // the largest component's centroid joins that component's most central member.
  std::vector<std::vector<std::uint32_t>> groups(count);
  for (std::uint32_t k = 0; k < members.size(); ++k) groups[comp[k]].push_back(k);
  std::size_t largest = 0;
  for (std::size_t c = 1; c < count; ++c)
    if (groups[c].size() > groups[largest].size()) largest = c;

  std::vector<std::uint32_t> global_ids;
  for (std::uint32_t k : groups[largest]) global_ids.push_back(members[k]);
  const auto center = centroid_of(whitened, global_ids);
  auto nearest = [&](const std::vector<std::uint32_t>& group) {
    std::uint32_t best = group.front();
    double best_sq = std::numeric_limits<double>::infinity();
    for (std::uint32_t k : group) {
      const double sq = squared_distance(row_span(whitened, members[k]), center);
      if (sq < best_sq) {
        best_sq = sq;
        best = k;
      }
    }
    return best;
  };
  const std::uint32_t hub = nearest(groups[largest]);
  for (std::size_t c = 0; c < count; ++c) {
    if (c == largest) continue;
    const std::uint32_t u = nearest(groups[c]);
    edges.push_back({std::min(u, hub), std::max(u, hub), min_weight});
  }
  return SparseGraph::from_edges(members.size(), std::move(edges));
}

PartitionTree build_tree(const SparseGraph& g, const Matrix& whitened, const TreeOptions& options,
                         WhitenStats feature_stats) {
  const auto n = static_cast<std::size_t>(whitened.rows());
  if (g.n_vertices() != n)
    throw std::invalid_argument("build_tree: graph has " + std::to_string(g.n_vertices()) + " vertices but data has " +
                                std::to_string(n) + " rows");
  if (n == 0) throw std::invalid_argument("build_tree: no observations");
  if (options.min_leaf < 2) throw std::invalid_argument("build_tree: min_leaf must be at least 2");
  if (options.max_depth < 1) throw std::invalid_argument("build_tree: max_depth must be at least 1");
  if (feature_stats.size() != 0 && feature_stats.size() != static_cast<std::size_t>(whitened.cols()))
    throw std::invalid_argument("build_tree: whitening stats do not match the feature dimension");

  std::vector<TreeNode> nodes(1);
  nodes[0].members.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) nodes[0].members[i] = i;
  std::vector<std::uint32_t> per_scale(options.max_depth + 2, 0);
  per_scale[0] = 1;

  for (NodeId id = 0; id < nodes.size(); ++id) {
    nodes[id].centroid = centroid_of(whitened, nodes[id].members);
    if (nodes[id].members.size() < 2 * options.min_leaf || nodes[id].scale >= options.max_depth) continue;

    const SparseGraph sub = connected_subgraph(g, whitened, nodes[id].members);
    const Bisection split = bisect(sub, options.epsilon, derive_seed(options.seed, {id}));
    std::vector<std::uint32_t> sides[2];
    for (std::size_t k = 0; k < split.labels.size(); ++k) sides[split.labels[k]].push_back(nodes[id].members[k]);
    if (sides[0].empty() || sides[1].empty()) continue;

    const std::uint32_t child_scale = nodes[id].scale + 1;
    for (auto& side : sides) {
      TreeNode child;
      child.scale = child_scale;
      child.index = per_scale[child_scale]++;
      child.parent = id;
      child.members = std::move(side);
      nodes[id].children.push_back(static_cast<NodeId>(nodes.size()));
      nodes.push_back(std::move(child));
    }
  }

  if (feature_stats.size() == 0) {
    feature_stats.means = Vector::Zero(whitened.cols());
    feature_stats.sds = Vector::Ones(whitened.cols());
  }
  PartitionTree tree(std::move(nodes), std::move(feature_stats));
  tree.check_invariants();
  return tree;
}

void save_tree(const PartitionTree& tree, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const auto nodes = tree.nodes();
  std::vector<TreeNode> copy(nodes.begin(), nodes.end());
  std::vector<std::uint64_t> order;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges(copy.size());
  flatten(copy, 0, order, ranges);

  const std::size_t p = tree.dimension();
  binio::write_magic(out, kTreeMagic);
  binio::write_u32(out, kTreeFormatVersion);
  binio::write_u64(out, tree.n_observations());
  binio::write_u64(out, p);
  binio::write_f64_block(out, tree.feature_stats().means.data(), p);
  binio::write_f64_block(out, tree.feature_stats().sds.data(), p);
  binio::write_u64(out, copy.size());
  for (std::uint64_t v : order) binio::write_u64(out, v);
  for (NodeId id = 0; id < copy.size(); ++id) {
    const TreeNode& node = copy[id];
    binio::write_u32(out, node.scale);
    binio::write_u32(out, node.index);
    binio::write_i64(out, node.parent ? static_cast<std::int64_t>(*node.parent) : -1);
    binio::write_u32(out, static_cast<std::uint32_t>(node.children.size()));
    for (NodeId c : node.children) binio::write_u32(out, c);
    binio::write_u64(out, ranges[id].first);
    binio::write_u64(out, ranges[id].second);
    binio::write_f64_block(out, node.centroid.data(), p);
  }
  if (!out) throw DataError("write failed for " + path.string());
}

PartitionTree load_tree(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string what = path.string();
  binio::expect_magic(in, kTreeMagic, what);
  const std::uint32_t version = binio::read_u32(in, what);
  if (version != kTreeFormatVersion)
    throw DataError(what + ": tree format version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kTreeFormatVersion) + ")");
  const std::uint64_t n = binio::read_u64(in, what);
  const std::uint64_t p = binio::read_u64(in, what);
  if (p > (std::uint64_t{1} << 32) || n > (std::uint64_t{1} << 32)) throw DataError(what + ": implausible header");
  WhitenStats stats;
  stats.means.resize(static_cast<Eigen::Index>(p));
  stats.sds.resize(static_cast<Eigen::Index>(p));
  binio::read_f64_block(in, stats.means.data(), p, what);
  binio::read_f64_block(in, stats.sds.data(), p, what);
  const std::uint64_t count = binio::read_u64(in, what);
  if (count == 0 || count > 2 * n + 1) throw DataError(what + ": implausible node count " + std::to_string(count));
  std::vector<std::uint64_t> order(n);
  for (auto& v : order) {
    v = binio::read_u64(in, what);
    if (v >= n) throw DataError(what + ": member index out of range");
  }
  std::vector<TreeNode> nodes(count);
  for (auto& node : nodes) {
    node.scale = binio::read_u32(in, what);
    node.index = binio::read_u32(in, what);
    const std::int64_t parent = binio::read_i64(in, what);
    if (parent >= static_cast<std::int64_t>(count)) throw DataError(what + ": parent id out of range");
    if (parent >= 0) node.parent = static_cast<NodeId>(parent);
    const std::uint32_t kids = binio::read_u32(in, what);
    if (kids > count) throw DataError(what + ": implausible child count");
    for (std::uint32_t c = 0; c < kids; ++c) {
      const std::uint32_t child = binio::read_u32(in, what);
      if (child >= count) throw DataError(what + ": child id out of range");
      node.children.push_back(child);
    }
    const std::uint64_t begin = binio::read_u64(in, what);
    const std::uint64_t end = binio::read_u64(in, what);
    if (begin > end || end > n) throw DataError(what + ": bad member range");
    node.members.assign(order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(node.members.begin(), node.members.end());
    node.centroid.resize(p);
    binio::read_f64_block(in, node.centroid.data(), p, what);
  }
  PartitionTree tree(std::move(nodes), std::move(stats));
  try {
    tree.check_invariants();
  } catch (const std::logic_error& e) {
    throw DataError(what + ": inconsistent tree: " + e.what());
  }
  return tree;
}

}  // namespace msb
