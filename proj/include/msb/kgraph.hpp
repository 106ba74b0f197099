#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <tuple>
#include <vector>

#include "msb/types.hpp"

namespace msb {

struct WeightedEdge {
  std::uint32_t u;
  std::uint32_t v;
  double weight;
};

/// Undirected weighted graph in compressed adjacency form. Each vertex's
/// neighbor list is sorted by index; every edge is stored in both directions.
class SparseGraph {
 public:
  SparseGraph() = default;

  // Builds from undirected edges (u != v, each unordered pair at most once).
  static SparseGraph from_edges(std::size_t n_vertices, std::vector<WeightedEdge> edges);

  std::size_t n_vertices() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t n_edges() const { return targets_.size() / 2; }
  std::size_t degree(std::size_t v) const { return offsets_[v + 1] - offsets_[v]; }

  std::span<const std::uint32_t> neighbors(std::size_t v) const {
    return {targets_.data() + offsets_[v], degree(v)};
  }
  std::span<const double> weights(std::size_t v) const { return {weights_.data() + offsets_[v], degree(v)}; }

  // Undirected edges with u < v in (u, v) lexicographic order.
  std::vector<WeightedEdge> edges() const;

  // Throws std::logic_error on asymmetry, self-loops, unsorted lists or weights outside (0, 1].
  void check_invariants() const;

  bool operator==(const SparseGraph&) const = default;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> targets_;
  std::vector<double> weights_;
};

bool is_connected(const SparseGraph& g);
// Component id per vertex, numbered in order of each component's lowest vertex.
std::vector<std::uint32_t> connected_components(const SparseGraph& g, std::size_t* count = nullptr);

double pairwise_distance(std::span<const double> a, std::span<const double> b);
// Squared Euclidean distance; the single kernel used by every graph routine so
// blocked and naive constructions agree bit for bit.
double squared_distance(std::span<const double> a, std::span<const double> b);

struct KernelChoice {
  double threshold = 0.0;   // keep edges with kernel weight > threshold
  double bandwidth = 1.0;   // weight = exp(-rho^2 / bandwidth)
  std::size_t pairs_used = 0;
  bool subsampled = false;
};

struct KernelOptions {
  // Unset means: use the median pairwise squared distance.
  std::optional<double> bandwidth = 1.0;
  std::size_t max_pairs = 1'000'000;
  std::uint64_t seed = 0;
};

/// Chooses the weight threshold whose retained edges give the requested
/// average degree, from all pairs or a uniform subsample of max_pairs pairs.
KernelChoice choose_kernel(const Matrix& x, std::size_t target_avg_degree, const KernelOptions& options = {});

double select_threshold(const Matrix& x, std::size_t target_avg_degree, double bandwidth = 1.0);

struct GraphBuildSummary {
  std::size_t n_vertices = 0;
  std::size_t n_edges = 0;
  double average_degree = 0.0;
  std::vector<std::uint32_t> isolated;  // vertices with no edge before attachment
};

struct GraphBuildOptions {
  double bandwidth = 1.0;
  std::size_t block_rows = 64;
  std::size_t threads = 1;
};

/// Edge (u, v) with weight exp(-rho^2 / bandwidth) iff that weight > t.
SparseGraph build_graph(const Matrix& x, double t, const GraphBuildOptions& options = {},
                        GraphBuildSummary* summary = nullptr);

// Reference O(n^2) double loop, used to cross-check the blocked build.
SparseGraph build_graph_naive(const Matrix& x, double t, double bandwidth = 1.0);

/// Attaches every isolated vertex to its nearest neighbour (lowest index on ties).
SparseGraph attach_isolated(const SparseGraph& g, const Matrix& x, double bandwidth = 1.0);

void save_edge_list(const SparseGraph& g, const std::filesystem::path& path);
SparseGraph load_edge_list(const std::filesystem::path& path);

}  // namespace msb
