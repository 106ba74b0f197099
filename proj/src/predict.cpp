#include "msb/predict.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "msb/error.hpp"
#include "msb/model.hpp"

namespace msb {

namespace {

void check_grid(std::span<const double> grid) {
  if (grid.size() < 2) throw std::invalid_argument("y grid needs at least two points");
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (!std::isfinite(grid[g])) throw std::invalid_argument("y grid contains a non-finite value");
    if (g > 0 && !(grid[g] > grid[g - 1])) throw std::invalid_argument("y grid must be strictly increasing");
  }
}

void check_samples(const PosteriorSamples& samples) {
  if (samples.n_draws() == 0) throw std::invalid_argument("posterior has no retained draws");
}

double normal_pdf(double y, double mean, double variance) {
  const double d = y - mean;
  return std::exp(-0.5 * d * d / variance) / std::sqrt(2.0 * std::numbers::pi * variance);
}

DensityEstimate summarize(std::vector<double> curves, std::size_t n_draws, std::span<const double> grid,
                          bool keep_draws) {
  DensityEstimate est;
  est.y_grid.assign(grid.begin(), grid.end());
  est.n_draws = n_draws;
  const std::size_t g_count = grid.size();
  est.p025.resize(g_count);
  est.p50.resize(g_count);
  est.p975.resize(g_count);
  std::vector<double> column(n_draws);
  for (std::size_t g = 0; g < g_count; ++g) {
    for (std::size_t d = 0; d < n_draws; ++d) column[d] = curves[d * g_count + g];
    est.p025[g] = quantile(column, 0.025);
    est.p50[g] = quantile(column, 0.5);
    est.p975[g] = quantile(column, 0.975);
  }
  if (keep_draws) est.draws = std::move(curves);
  return est;
}

}  // namespace

std::vector<double> default_grid(const PosteriorSamples& samples, std::size_t points, double width) {
  if (points < 2) throw std::invalid_argument("grid needs at least two points");
  if (!(width > 0.0)) throw std::invalid_argument("grid width must be positive");
  std::vector<double> grid(points);
  const double lo = samples.y_mean - width * samples.y_sd;
  const double step = 2.0 * width * samples.y_sd / static_cast<double>(points - 1);
  for (std::size_t g = 0; g < points; ++g) grid[g] = lo + step * static_cast<double>(g);
  return grid;
}

void check_compatible(const PartitionTree& tree, const PosteriorSamples& samples) {
  if (samples.n_nodes != tree.size() || samples.tree_fingerprint != tree_fingerprint(tree))
    throw DataError("posterior was fitted on a different tree (" + std::to_string(samples.n_nodes) + " vs " +
                    std::to_string(tree.size()) + " nodes)");
}

DensityEstimate path_density(const PosteriorSamples& samples, std::span<const NodeId> path,
                             std::span<const double> y_grid, bool keep_draws) {
  check_samples(samples);
  check_grid(y_grid);
  for (NodeId node : path)
    if (node >= samples.n_nodes) throw std::invalid_argument("path node outside the posterior");
  const std::size_t n_draws = samples.n_draws();
  const std::size_t g_count = y_grid.size();
  std::vector<double> whitened(g_count);
  for (std::size_t g = 0; g < g_count; ++g) whitened[g] = (y_grid[g] - samples.y_mean) / samples.y_sd;

  std::vector<double> curves(n_draws * g_count, 0.0);
  for (std::size_t d = 0; d < n_draws; ++d) {
    const auto nodes = samples.draw(d);
    const auto pi = path_weights(nodes, path);
    double* curve = curves.data() + d * g_count;
    for (std::size_t j = 0; j < path.size(); ++j) {
      if (pi[j] == 0.0) continue;
      const NodeParams& p = nodes[path[j]];
      for (std::size_t g = 0; g < g_count; ++g) curve[g] += pi[j] * normal_pdf(whitened[g], p.mean, p.variance);
    }
    for (std::size_t g = 0; g < g_count; ++g) curve[g] /= samples.y_sd;
  }
  DensityEstimate est = summarize(std::move(curves), n_draws, y_grid, keep_draws);
  est.point_mean = path_point(samples, path);
  return est;
}

DensityEstimate predictive_density(const PartitionTree& tree, const PosteriorSamples& samples,
                                   std::span<const double> x, std::span<const double> y_grid, bool keep_draws) {
  check_compatible(tree, samples);
  return path_density(samples, tree.route_raw(x), y_grid, keep_draws);
}

DensityEstimate scale_density(const PartitionTree& tree, const PosteriorSamples& samples, std::span<const double> x,
                              std::span<const double> y_grid, std::uint32_t scale) {
  check_compatible(tree, samples);
  check_samples(samples);
  check_grid(y_grid);
  const auto path = tree.route_raw(x);
  if (scale >= path.size())
    throw std::invalid_argument("scale " + std::to_string(scale) + " is below the leaf of this path");
  const NodeId node = path[scale];
  const std::size_t n_draws = samples.n_draws();
  const std::size_t g_count = y_grid.size();
  std::vector<double> curves(n_draws * g_count);
  double mean = 0.0;
  for (std::size_t d = 0; d < n_draws; ++d) {
    const NodeParams& p = samples.draw(d)[node];
    mean += p.mean;
    for (std::size_t g = 0; g < g_count; ++g)
      curves[d * g_count + g] = normal_pdf((y_grid[g] - samples.y_mean) / samples.y_sd, p.mean, p.variance) / samples.y_sd;
  }
  DensityEstimate est = summarize(std::move(curves), n_draws, y_grid, false);
  est.point_mean = samples.y_mean + samples.y_sd * mean / static_cast<double>(n_draws);
  return est;
}

double path_point(const PosteriorSamples& samples, std::span<const NodeId> path) {
  check_samples(samples);
  double total = 0.0;
  for (std::size_t d = 0; d < samples.n_draws(); ++d) {
    const auto nodes = samples.draw(d);
    const auto pi = path_weights(nodes, path);
    double mix = 0.0;
    for (std::size_t j = 0; j < path.size(); ++j) mix += pi[j] * nodes[path[j]].mean;
    total += mix;
  }
  return samples.y_mean + samples.y_sd * total / static_cast<double>(samples.n_draws());
}

double point_predict(const PartitionTree& tree, const PosteriorSamples& samples, std::span<const double> x) {
  check_compatible(tree, samples);
  return path_point(samples, tree.route_raw(x));
}

double trapezoid(std::span<const double> grid, std::span<const double> values) {
  if (grid.size() != values.size()) throw std::invalid_argument("trapezoid: size mismatch");
  double area = 0.0;
  for (std::size_t g = 1; g < grid.size(); ++g) area += 0.5 * (values[g] + values[g - 1]) * (grid[g] - grid[g - 1]);
  return area;
}

double quantile(std::vector<double>& values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level must lie in [0, 1]");
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double a = values[lo];
  if (frac == 0.0 || lo + 1 >= values.size()) return a;
  const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  return a + frac * (b - a);
}

}  // namespace msb
