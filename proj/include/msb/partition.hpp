#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "msb/kgraph.hpp"

namespace msb {

/// Two-way vertex labeling. balance = (larger side size) / (n / 2).
struct Bisection {
  std::vector<std::uint8_t> labels;
  double cut_weight = 0.0;
  double balance = 0.0;
};

struct BisectOptions {
  double epsilon = 0.05;
  std::uint64_t seed = 0;
  std::size_t coarsest_size = 64;
  std::size_t max_refine_passes = 10;
  std::size_t initial_trials = 4;
};

// Largest side size allowed for n vertices: max(ceil(n/2), floor((1+eps) n/2)).
std::size_t max_side_size(std::size_t n, double epsilon);

// Sum of weights of edges whose endpoints carry different labels.
double cut_weight(const SparseGraph& g, std::span<const std::uint8_t> labels);

/// Multilevel balanced bisection: heavy-edge matching coarsening, greedy
/// region growing on the coarsest graph, boundary FM refinement on the way up.
/// Requires a connected graph with at least two vertices. Labels are
/// normalized so vertex 0 is on side 0.
Bisection bisect(const SparseGraph& g, const BisectOptions& options);
Bisection bisect(const SparseGraph& g, double epsilon, std::uint64_t seed);

/// Exhaustive minimum-cut balanced bisection for graphs of at most 20 vertices.
/// Ties go to the lexicographically smallest label vector.
Bisection brute_force_min_cut(const SparseGraph& g, double epsilon);

}  // namespace msb
