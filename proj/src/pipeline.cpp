#include "msb/pipeline.hpp"

#include <chrono>
#include <stdexcept>

#include "msb/rng.hpp"

namespace msb {

namespace {

constexpr std::uint64_t kKernelSeed = 1;
constexpr std::uint64_t kTreeSeed = 2;
constexpr std::uint64_t kGibbsSeed = 3;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

GibbsOptions gibbs_options(const FitConfig& config) {
  GibbsOptions options;
  options.seed = derive_seed(config.seed, {kGibbsSeed});
  options.thin = config.thin;
  options.max_draws = config.max_draws;
  options.early_stop = config.early_stop;
  options.threads = config.threads;
  return options;
}

GraphStage build_graph_stage(const Matrix& features, const FitConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const auto n = static_cast<std::size_t>(features.rows());
  if (n < 2) throw std::invalid_argument("need at least two observations to build a graph");
  GraphStage stage;
  stage.x_stats = fit_whitening(features);
  stage.whitened = features;
  whiten_in_place(stage.whitened, stage.x_stats);

  KernelOptions kopts;
  kopts.bandwidth = config.bandwidth;
  kopts.max_pairs = config.max_pairs;
  kopts.seed = derive_seed(config.seed, {kKernelSeed});
  const std::size_t target = std::min(config.target_degree, n - 1);
  stage.kernel = choose_kernel(stage.whitened, target, kopts);

  GraphBuildOptions gopts;
  gopts.bandwidth = stage.kernel.bandwidth;
  gopts.threads = config.threads;
  SparseGraph raw = build_graph(stage.whitened, stage.kernel.threshold, gopts, &stage.summary);
  stage.graph = stage.summary.isolated.empty() ? std::move(raw) : attach_isolated(raw, stage.whitened, stage.kernel.bandwidth);
  stage.seconds = seconds_since(start);
  return stage;
}

PartitionTree build_tree_stage(const GraphStage& stage, const FitConfig& config) {
  TreeOptions opts = config.tree;
  opts.seed = derive_seed(config.seed, {kTreeSeed});
  return build_tree(stage.graph, stage.whitened, opts, stage.x_stats);
}

PosteriorSamples fit_posterior(const PartitionTree& tree, const Vector& responses, std::span<const std::size_t> rows,
                               const FitConfig& config) {
  if (static_cast<std::size_t>(responses.size()) != tree.n_observations())
    throw std::invalid_argument("response count does not match the tree");
  Vector selected;
  if (rows.empty()) {
    selected = responses;
  } else {
    selected.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) selected[static_cast<Eigen::Index>(k)] = responses[static_cast<Eigen::Index>(rows[k])];
  }
  const WhitenStats y_stats = fit_whitening(selected);
  std::vector<double> y(static_cast<std::size_t>(responses.size()));
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = (responses[static_cast<Eigen::Index>(i)] - y_stats.means[0]) / y_stats.sds[0];

  const Observations obs = Observations::training(tree, y, rows);
  PosteriorSamples samples = run_gibbs(tree, obs, config.hyper, gibbs_options(config));
  samples.y_mean = y_stats.means[0];
  samples.y_sd = y_stats.sds[0];
  return samples;
}

FitResult fit_model(const Dataset& data, const FitConfig& config) {
  data.validate();
  config.hyper.validate();
  FitResult result;
  result.graph = build_graph_stage(data.features, config);
  auto start = std::chrono::steady_clock::now();
  result.tree = build_tree_stage(result.graph, config);
  result.tree_seconds = seconds_since(start);
  start = std::chrono::steady_clock::now();
  result.posterior = fit_posterior(result.tree, data.responses, {}, config);
  result.gibbs_seconds = seconds_since(start);
  return result;
}

}  // namespace msb
