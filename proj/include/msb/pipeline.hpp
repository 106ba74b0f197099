#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include "msb/dataio.hpp"
#include "msb/gibbs.hpp"
#include "msb/kgraph.hpp"
#include "msb/model.hpp"
#include "msb/ptree.hpp"

namespace msb {

struct FitConfig {
  std::uint64_t seed = 0;
  std::size_t target_degree = 20;     // clamped to n - 1 on small inputs
  std::optional<double> bandwidth;    // unset: median pairwise squared distance
  std::size_t max_pairs = 1'000'000;
  TreeOptions tree;                   // tree.seed is derived from `seed`
  Hyperparams hyper;
  std::size_t thin = 10;
  std::size_t max_draws = 2000;
  bool early_stop = false;
  std::size_t threads = 1;
};

struct GraphStage {
  WhitenStats x_stats;
  Matrix whitened;
  KernelChoice kernel;
  GraphBuildSummary summary;
  SparseGraph graph;
  double seconds = 0.0;
};

struct FitResult {
  GraphStage graph;
  PartitionTree tree;
  PosteriorSamples posterior;
  double tree_seconds = 0.0;
  double gibbs_seconds = 0.0;
};

// Whitening, kernel choice, thresholded graph and isolated-vertex attachment.
GraphStage build_graph_stage(const Matrix& features, const FitConfig& config);

PartitionTree build_tree_stage(const GraphStage& stage, const FitConfig& config);

/// Whitens the selected responses and runs the sampler on their stored tree
/// paths. Empty `rows` means every training row.
PosteriorSamples fit_posterior(const PartitionTree& tree, const Vector& responses, std::span<const std::size_t> rows,
                               const FitConfig& config);

FitResult fit_model(const Dataset& data, const FitConfig& config);

GibbsOptions gibbs_options(const FitConfig& config);

}  // namespace msb
