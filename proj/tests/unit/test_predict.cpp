#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "msb/error.hpp"
#include "msb/predict.hpp"
#include "msb/rng.hpp"
#include "oracles.hpp"

using namespace msb;

namespace {

double normal_pdf(double y, double mean, double var) {
  return std::exp(-0.5 * (y - mean) * (y - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

Matrix line_points(std::size_t n) {
  Matrix x(static_cast<Eigen::Index>(n), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, 0) = static_cast<double>(i);
  return x;
}

PosteriorSamples empty_posterior(const PartitionTree& tree) {
  PosteriorSamples s;
  s.n_nodes = tree.size();
  s.tree_fingerprint = tree_fingerprint(tree);
  return s;
}

PosteriorSamples random_posterior(const PartitionTree& tree, std::size_t n_draws, std::uint64_t seed) {
  PosteriorSamples s = empty_posterior(tree);
  Hyperparams hyper;
  for (std::size_t d = 0; d < n_draws; ++d) {
    const MsbState state = sample_prior(tree, hyper, seed + d);
    s.draws.insert(s.draws.end(), state.nodes.begin(), state.nodes.end());
  }
  return s;
}

std::vector<double> uniform_grid(double lo, double hi, std::size_t points) {
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  return g;
}

}  // namespace

TEST_CASE("single standard normal draw reproduces the normal density") {
  const PartitionTree tree = oracle::halving_tree(line_points(4), 0);
  PosteriorSamples s = empty_posterior(tree);
  s.draws = {NodeParams{1.0, 0.0, 1.0}};
  const auto grid = uniform_grid(-5.0, 5.0, 101);
  const std::vector<double> x{1.0};
  const DensityEstimate est = predictive_density(tree, s, x, grid);
  CHECK(est.n_draws == 1);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    CHECK(std::abs(est.p50[g] - normal_pdf(grid[g], 0.0, 1.0)) <= 1e-12);
    CHECK(est.p025[g] == est.p50[g]);
    CHECK(est.p975[g] == est.p50[g]);
  }

  s.y_mean = 3.0;
  s.y_sd = 2.0;
  const auto wide = uniform_grid(-9.0, 15.0, 97);
  const DensityEstimate back = predictive_density(tree, s, x, wide);
  for (std::size_t g = 0; g < wide.size(); ++g) CHECK(std::abs(back.p50[g] - normal_pdf(wide[g], 3.0, 4.0)) <= 1e-12);
  CHECK(point_predict(tree, s, x) == 3.0);
}

TEST_CASE("per-draw curves equal an independent mixture recomputation") {
  const Matrix x = line_points(16);
  const PartitionTree tree = oracle::halving_tree(x, 3);
  PosteriorSamples s = random_posterior(tree, 25, 40);
  s.y_mean = -0.5;
  s.y_sd = 1.7;
  const auto grid = uniform_grid(-8.0, 8.0, 161);
  for (std::size_t row : {0u, 5u, 11u}) {
    const DensityEstimate est = predictive_density(tree, s, row_span(x, row), grid, true);
    const auto path = tree.route(row_span(x, row));
    REQUIRE(est.draws.size() == 25 * grid.size());
    for (std::size_t d = 0; d < 25; ++d) {
      const auto nodes = s.draw(d);
      double rest = 1.0;
      std::vector<double> pi;
      for (NodeId id : path) {
        pi.push_back(nodes[id].stick * rest);
        rest *= 1.0 - nodes[id].stick;
      }
      const auto curve = est.draw_curve(d);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const double z = (grid[g] - s.y_mean) / s.y_sd;
        double f = 0.0;
        for (std::size_t j = 0; j < path.size(); ++j)
          f += pi[j] * normal_pdf(z, nodes[path[j]].mean, nodes[path[j]].variance);
        f /= s.y_sd;
        CHECK(std::abs(curve[g] - f) <= 1e-12 * std::max(1.0, f));
        CHECK(curve[g] >= 0.0);
      }
    }
  }
}

TEST_CASE("fitted curves integrate to one and percentile bands are ordered") {
  const Matrix x = line_points(64);
  const PartitionTree tree = oracle::halving_tree(x, 3);
  std::vector<double> y(64);
  Rng rng(8);
  for (std::size_t i = 0; i < 64; ++i) y[i] = (i < 32 ? -1.0 : 1.5) + 0.4 * rng.normal();
  Hyperparams hyper;
  hyper.max_iters = 2000;
  hyper.burn_in = 500;
  GibbsOptions options;
  options.seed = 2;
  PosteriorSamples post = run_gibbs(tree, Observations::training(tree, y), hyper, options);
  const auto grid = default_grid(post);
  CHECK(grid.size() == 512);
  CHECK(grid.front() == doctest::Approx(post.y_mean - 6.0 * post.y_sd));
  CHECK(grid.back() == doctest::Approx(post.y_mean + 6.0 * post.y_sd));
  for (std::size_t row : {3u, 40u}) {
    const DensityEstimate est = predictive_density(tree, post, row_span(x, row), grid, true);
    for (std::size_t d = 0; d < est.n_draws; ++d)
      CHECK(std::abs(oracle::integrate(grid, est.draw_curve(d)) - 1.0) <= 1e-3);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      CHECK(est.p025[g] <= est.p50[g]);
      CHECK(est.p50[g] <= est.p975[g]);
      CHECK(est.p025[g] >= 0.0);
    }

    double grid_mean = 0.0;
    std::vector<double> yf(grid.size());
    for (std::size_t d = 0; d < est.n_draws; ++d) {
      const auto curve = est.draw_curve(d);
      for (std::size_t g = 0; g < grid.size(); ++g) yf[g] = grid[g] * curve[g];
      grid_mean += oracle::integrate(grid, yf);
    }
    grid_mean /= static_cast<double>(est.n_draws);
    const double point = point_predict(tree, post, row_span(x, row));
    CHECK(std::abs(point - grid_mean) <= 1e-2);
    CHECK(est.point_mean == point);
  }
}

TEST_CASE("point prediction examples") {
  const PartitionTree root = oracle::halving_tree(line_points(3), 0);
  PosteriorSamples s = empty_posterior(root);
  s.draws = {NodeParams{1.0, 0.0, 1.0}, NodeParams{1.0, 0.0, 0.3}};
  s.y_mean = 4.5;
  s.y_sd = 2.0;
  CHECK(point_predict(root, s, std::vector<double>{1.0}) == 4.5);

  const PartitionTree pair = oracle::halving_tree(line_points(2), 1);
  PosteriorSamples t = empty_posterior(pair);
  t.draws = {NodeParams{0.5, -2.0, 1.0}, NodeParams{1.0, 2.0, 1.0}, NodeParams{1.0, 2.0, 1.0}};
  CHECK(point_predict(pair, t, std::vector<double>{0.0}) == 0.0);
  CHECK(path_point(t, std::vector<NodeId>{0, 2}) == 0.0);
}

TEST_CASE("single-scale densities are constant within a cell") {
  const Matrix x = line_points(16);
  const PartitionTree tree = oracle::halving_tree(x, 3);
  const PosteriorSamples s = random_posterior(tree, 10, 70);
  const auto grid = uniform_grid(-6.0, 6.0, 121);
  // Rows 0 and 3 share the scale-1 and scale-2 cells but not their leaf.
  const std::vector<double> a{0.0}, b{3.0};
  REQUIRE(tree.route(a)[2] == tree.route(b)[2]);
  REQUIRE(tree.route(a)[3] != tree.route(b)[3]);
  for (std::uint32_t j : {0u, 1u, 2u}) {
    const DensityEstimate da = scale_density(tree, s, a, grid, j);
    const DensityEstimate db = scale_density(tree, s, b, grid, j);
    CHECK(da.p025 == db.p025);
    CHECK(da.p50 == db.p50);
    CHECK(da.p975 == db.p975);
  }
  CHECK_FALSE(scale_density(tree, s, a, grid, 3).p50 == scale_density(tree, s, b, grid, 3).p50);
  CHECK_THROWS_AS(scale_density(tree, s, a, grid, 4), std::invalid_argument);
}

TEST_CASE("invalid prediction inputs") {
  const Matrix x = line_points(8);
  const PartitionTree tree = oracle::halving_tree(x, 2);
  const PosteriorSamples s = random_posterior(tree, 3, 1);
  const std::vector<double> q{2.0};
  CHECK_THROWS_AS(predictive_density(tree, s, q, std::vector<double>{0.0}), std::invalid_argument);
  CHECK_THROWS_AS(predictive_density(tree, s, q, std::vector<double>{0.0, 0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(predictive_density(tree, s, q, std::vector<double>{1.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(predictive_density(tree, s, std::vector<double>{1.0, 2.0}, uniform_grid(0, 1, 5)), std::invalid_argument);
  CHECK_THROWS_AS(predictive_density(tree, empty_posterior(tree), q, uniform_grid(0, 1, 5)), std::invalid_argument);
  const PartitionTree other = oracle::halving_tree(x, 1);
  CHECK_THROWS_AS(check_compatible(other, s), DataError);
  CHECK_THROWS_AS(predictive_density(other, s, q, uniform_grid(0, 1, 5)), DataError);
  CHECK_THROWS_AS(default_grid(s, 1), std::invalid_argument);
}

TEST_CASE("quantile and trapezoid helpers") {
  std::vector<double> v{4.0, 1.0, 3.0, 2.0};
  CHECK(quantile(v, 0.5) == 2.5);
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 4.0);
  std::vector<double> w{10.0, 20.0, 30.0, 40.0, 50.0};
  CHECK(quantile(w, 0.025) == doctest::Approx(11.0));
  CHECK(quantile(w, 0.975) == doctest::Approx(49.0));
  CHECK_THROWS_AS(quantile(w, 1.5), std::invalid_argument);
  std::vector<double> none;
  CHECK_THROWS_AS(quantile(none, 0.5), std::invalid_argument);

  const auto grid = uniform_grid(0.0, 2.0, 201);
  std::vector<double> f(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) f[i] = grid[i] * grid[i];
  CHECK(trapezoid(grid, f) == doctest::Approx(oracle::integrate(grid, f)).epsilon(1e-14));
  CHECK(trapezoid(grid, f) == doctest::Approx(8.0 / 3.0).epsilon(1e-4));
}
