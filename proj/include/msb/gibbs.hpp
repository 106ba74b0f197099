#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "msb/model.hpp"
#include "msb/ptree.hpp"

namespace msb {

/// Whitened responses with the cached root-to-leaf path of each observation.
class Observations {
 public:
  Observations() = default;

  // Training rows of `tree` with their stored paths; `rows` selects a subset (all rows when empty).
  static Observations training(const PartitionTree& tree, std::span<const double> y,
                               std::span<const std::size_t> rows = {});

  void push(std::span<const NodeId> path, double y);

  std::size_t size() const { return y_.size(); }
  std::span<const NodeId> path(std::size_t i) const {
    return {nodes_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  double y(std::size_t i) const { return y_[i]; }
  std::span<const double> responses() const { return y_; }

 private:
  std::vector<NodeId> nodes_;
  std::vector<std::size_t> offsets_{0};
  std::vector<double> y_;
};

/// Per-node level-allocated counts and response sums.
struct SufficientStats {
  std::vector<std::uint64_t> n_level;
  std::vector<double> sum_y;
  std::vector<double> sum_y_sq;

  static SufficientStats from_scratch(std::size_t n_nodes, const Observations& obs,
                                      std::span<const std::uint32_t> levels);

  // Level counts summed over strict descendants.
  std::vector<std::uint64_t> n_below(const PartitionTree& tree) const;

  void add(NodeId node, double y);
  void remove(NodeId node, double y);
};

struct DiagnosticResult {
  bool passed = false;
  double statistic = 0.0;
  double p_value = 0.0;
  std::size_t batches = 0;
};

/// Batch-means normality check: standardized batch means, Jarque-Bera plus a
/// lag-one autocorrelation term, referred to chi-square with 3 degrees of freedom.
/// Requires at least 20 batches.
DiagnosticResult convergence_diagnostic(std::span<const double> trace, std::size_t batch, double level);

using IterationObserver =
    std::function<void(std::size_t iteration, const MsbState& state, const SufficientStats& stats)>;

struct GibbsOptions {
  std::uint64_t seed = 0;
  std::size_t thin = 10;
  std::size_t max_draws = 2000;  // thinning widens if the budget would exceed this
  bool early_stop = false;
  std::size_t diag_batch = 50;
  double diag_level = 0.05;
  std::size_t diag_every = 100;  // retained draws between diagnostic checks
  std::size_t threads = 1;
  IterationObserver observer;    // called after every iteration when set
};

struct PosteriorSamples {
  Hyperparams hyper;
  std::uint64_t seed = 0;
  std::size_t thin = 1;
  std::size_t iterations_run = 0;
  std::size_t n_observations = 0;
  bool stopped_early = false;
  double y_mean = 0.0;  // response whitening, for mapping back to original units
  double y_sd = 1.0;
  std::uint64_t tree_fingerprint = 0;
  std::size_t n_nodes = 0;
  std::vector<NodeParams> draws;  // draw-major, n_nodes per draw
  std::vector<double> loglik;     // mean log-likelihood per iteration

  std::size_t n_draws() const { return n_nodes ? draws.size() / n_nodes : 0; }
  std::span<const NodeParams> draw(std::size_t d) const { return {draws.data() + d * n_nodes, n_nodes}; }

  bool operator==(const PosteriorSamples&) const = default;
};

inline constexpr std::uint32_t kPosteriorFormatVersion = 1;

void save_posterior(const PosteriorSamples& samples, const std::filesystem::path& path);
PosteriorSamples load_posterior(const std::filesystem::path& path);

// Structural hash tying a posterior file to the tree it was fitted on.
std::uint64_t tree_fingerprint(const PartitionTree& tree);

/// Step (i): redraws every level label; returns the mean log-likelihood of the
/// observations under the incoming state.
double step_levels(const Observations& obs, MsbState& state, SufficientStats& stats, std::uint64_t seed,
                   std::size_t iteration, std::size_t threads = 1);

/// Step (ii): V ~ Beta(1 + n_level, alpha + n_below) on internal nodes.
void step_sticks(const PartitionTree& tree, const SufficientStats& stats, const Hyperparams& hyper, MsbState& state,
                 std::uint64_t seed, std::size_t iteration);

/// Step (iii): mean, then variance given the new mean, for every node.
void step_node_params(const PartitionTree& tree, const SufficientStats& stats, const Hyperparams& hyper,
                      MsbState& state, std::uint64_t seed, std::size_t iteration);

PosteriorSamples run_gibbs(const PartitionTree& tree, const Observations& obs, const Hyperparams& hyper,
                           const GibbsOptions& options);

}  // namespace msb
