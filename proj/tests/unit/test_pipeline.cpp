#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "msb/pipeline.hpp"
#include "msb/predict.hpp"
#include "msb/simgen.hpp"
#include "oracles.hpp"

using namespace msb;

namespace {

FitConfig quick_config(std::uint64_t seed) {
  FitConfig config;
  config.seed = seed;
  config.hyper.max_iters = 800;
  config.hyper.burn_in = 200;
  config.tree.min_leaf = 10;
  return config;
}

}  // namespace

TEST_CASE("fit configuration defaults") {
  const FitConfig c;
  CHECK(c.target_degree == 20);
  CHECK_FALSE(c.bandwidth.has_value());
  CHECK(c.tree.min_leaf == 20);
  CHECK(c.tree.max_depth == 8);
  CHECK(c.tree.epsilon == 0.05);
  CHECK(c.hyper.alpha == 1.0);
  CHECK(c.hyper.a == 3.0);
  CHECK(c.hyper.b == 1.0);
  CHECK(c.hyper.max_iters == 20000);
  CHECK(c.hyper.burn_in == 1000);
  CHECK(c.thin == 10);
  CHECK(c.max_draws == 2000);
  CHECK_FALSE(c.early_stop);
}

TEST_CASE("graph stage whitens, hits the target degree and leaves no isolated vertex") {
  const SimResult sim = gen_nonlinear_mixture(300, 40, MixtureParams{}, 1);
  const GraphStage stage = build_graph_stage(sim.data.features, quick_config(1));
  CHECK(stage.graph.n_vertices() == 300);
  for (Eigen::Index j = 0; j < 40; ++j) {
    CHECK(std::abs(stage.whitened.col(j).mean()) <= 1e-12);
  }
  CHECK(stage.summary.average_degree >= 19.0);
  CHECK(stage.summary.average_degree <= 21.0);
  for (std::size_t v = 0; v < 300; ++v) CHECK(stage.graph.degree(v) >= 1);
  CHECK_FALSE(stage.kernel.subsampled);
  CHECK(stage.kernel.bandwidth > 0.0);
}

TEST_CASE("target degree is clamped on tiny inputs") {
  const Matrix x = oracle::gaussian_matrix(8, 3, 2);
  const GraphStage stage = build_graph_stage(x, quick_config(2));
  CHECK(stage.graph.n_edges() == 28);
  CHECK_THROWS_AS(build_graph_stage(oracle::gaussian_matrix(1, 3, 2), quick_config(2)), std::invalid_argument);
}

TEST_CASE("explicit bandwidth is respected") {
  const Matrix x = oracle::gaussian_matrix(60, 3, 3);
  FitConfig config = quick_config(3);
  config.bandwidth = 2.5;
  CHECK(build_graph_stage(x, config).kernel.bandwidth == 2.5);
}

TEST_CASE("fit_model is deterministic and self-consistent") {
  const SimResult sim = gen_nonlinear_mixture(200, 30, MixtureParams{}, 4);
  const FitConfig config = quick_config(4);
  const FitResult a = fit_model(sim.data, config);
  const FitResult b = fit_model(sim.data, config);
  CHECK(a.graph.graph == b.graph.graph);
  CHECK(a.tree == b.tree);
  CHECK(a.posterior == b.posterior);
  CHECK_NOTHROW(a.tree.check_invariants());
  CHECK(a.posterior.n_observations == 200);
  CHECK(a.posterior.tree_fingerprint == tree_fingerprint(a.tree));
  CHECK(a.posterior.y_mean == doctest::Approx(sim.data.responses.mean()).epsilon(1e-12));
  CHECK(a.posterior.n_draws() == 60);

  const FitResult c = fit_model(sim.data, quick_config(5));
  CHECK_FALSE(c.posterior == a.posterior);

  const double pred = point_predict(a.tree, a.posterior, row_span(sim.data.features, 0));
  CHECK(std::isfinite(pred));
}

TEST_CASE("posterior on a subset of rows") {
  const SimResult sim = gen_nonlinear_mixture(120, 20, MixtureParams{}, 6);
  const FitConfig config = quick_config(6);
  const GraphStage stage = build_graph_stage(sim.data.features, config);
  const PartitionTree tree = build_tree_stage(stage, config);
  std::vector<std::size_t> rows;
  for (std::size_t i = 1; i < 120; ++i) rows.push_back(i);
  const PosteriorSamples post = fit_posterior(tree, sim.data.responses, rows, config);
  CHECK(post.n_observations == 119);
  double mean = 0.0;
  for (std::size_t i : rows) mean += sim.data.responses[static_cast<Eigen::Index>(i)];
  CHECK(post.y_mean == doctest::Approx(mean / 119.0).epsilon(1e-12));
  CHECK_THROWS_AS(fit_posterior(tree, Vector::Zero(119), {}, config), std::invalid_argument);
}

TEST_CASE("fit_model rejects bad data") {
  SimResult sim = gen_nonlinear_mixture(50, 5, MixtureParams{}, 7);
  sim.data.features(3, 2) = std::nan("");
  CHECK_THROWS(fit_model(sim.data, quick_config(7)));
  FitConfig config = quick_config(7);
  config.hyper.burn_in = config.hyper.max_iters;
  CHECK_THROWS_AS(fit_model(gen_nonlinear_mixture(50, 5, MixtureParams{}, 7).data, config), std::invalid_argument);
}
