#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "msb/gibbs.hpp"
#include "msb/ptree.hpp"

namespace msb {

/// Posterior predictive density of y on a grid, in original y units.
struct DensityEstimate {
  std::vector<double> y_grid;
  std::vector<double> p025;
  std::vector<double> p50;
  std::vector<double> p975;
  std::vector<double> draws;  // per-draw curves, draw-major; empty unless requested
  std::size_t n_draws = 0;
  double point_mean = 0.0;

  std::span<const double> draw_curve(std::size_t d) const {
    return {draws.data() + d * y_grid.size(), y_grid.size()};
  }
};

// Equally spaced grid over mean +- width * sd of the training responses.
std::vector<double> default_grid(const PosteriorSamples& samples, std::size_t points = 512, double width = 6.0);

// Throws DataError unless the posterior was fitted on this tree.
void check_compatible(const PartitionTree& tree, const PosteriorSamples& samples);

/// Mixture over the scales of `path` for every draw, summarized pointwise.
DensityEstimate path_density(const PosteriorSamples& samples, std::span<const NodeId> path,
                             std::span<const double> y_grid, bool keep_draws = false);

/// Routes raw x through the tree, then evaluates the mixture along its path.
DensityEstimate predictive_density(const PartitionTree& tree, const PosteriorSamples& samples,
                                   std::span<const double> x, std::span<const double> y_grid,
                                   bool keep_draws = false);

/// Density of the single node at `scale` on the path of x (mixture truncated to one scale).
DensityEstimate scale_density(const PartitionTree& tree, const PosteriorSamples& samples, std::span<const double> x,
                              std::span<const double> y_grid, std::uint32_t scale);

// Posterior mean of sum_j pi_j mu_j along a path, in original units.
double path_point(const PosteriorSamples& samples, std::span<const NodeId> path);
double point_predict(const PartitionTree& tree, const PosteriorSamples& samples, std::span<const double> x);

double trapezoid(std::span<const double> grid, std::span<const double> values);
// Linear-interpolation quantile of an unsorted sample (reorders `values`).
double quantile(std::vector<double>& values, double q);

}  // namespace msb
