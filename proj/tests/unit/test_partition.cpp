#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "msb/partition.hpp"
#include "msb/rng.hpp"
#include "oracles.hpp"

using namespace msb;

namespace {

SparseGraph clique_pair() {
  std::vector<WeightedEdge> edges;
  for (std::uint32_t base : {0u, 5u})
    for (std::uint32_t a = 0; a < 5; ++a)
      for (std::uint32_t b = a + 1; b < 5; ++b) edges.push_back({base + a, base + b, 1.0});
  edges.push_back({4, 5, 1.0});
  return SparseGraph::from_edges(10, std::move(edges));
}

SparseGraph path_graph(std::uint32_t n) {
  std::vector<WeightedEdge> edges;
  for (std::uint32_t v = 0; v + 1 < n; ++v) edges.push_back({v, v + 1, 1.0});
  return SparseGraph::from_edges(n, std::move(edges));
}

// Minimum balanced cut by direct enumeration, written independently of the library.
double enumerate_min_cut(const SparseGraph& g, double epsilon) {
  const std::size_t n = g.n_vertices();
  const auto limit = std::max<std::size_t>((n + 1) / 2, static_cast<std::size_t>(std::floor((1.0 + epsilon) * n / 2.0 + 1e-9)));
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t mask = 1; mask + 1 < (std::uint64_t{1} << n); ++mask) {
    std::size_t ones = 0;
    for (std::size_t v = 0; v < n; ++v) ones += (mask >> v) & 1u;
    if (std::max(ones, n - ones) > limit) continue;
    double cut = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      const auto nb = g.neighbors(u);
      const auto w = g.weights(u);
      for (std::size_t k = 0; k < nb.size(); ++k)
        if (nb[k] > u && ((mask >> u) & 1u) != ((mask >> nb[k]) & 1u)) cut += w[k];
    }
    best = std::min(best, cut);
  }
  return best;
}

void check_valid(const SparseGraph& g, const Bisection& b, double epsilon) {
  REQUIRE(b.labels.size() == g.n_vertices());
  const auto ones = static_cast<std::size_t>(std::count(b.labels.begin(), b.labels.end(), std::uint8_t{1}));
  CHECK(ones > 0);
  CHECK(ones < g.n_vertices());
  CHECK(std::max(ones, g.n_vertices() - ones) <= max_side_size(g.n_vertices(), epsilon));
  CHECK(b.labels[0] == 0);
  CHECK(b.cut_weight == cut_weight(g, b.labels));
}

}  // namespace

TEST_CASE("two cliques joined by one edge split along the bridge") {
  const SparseGraph g = clique_pair();
  const Bisection b = bisect(g, 0.05, 1);
  check_valid(g, b, 0.05);
  CHECK(b.cut_weight == 1.0);
  for (std::uint32_t v = 0; v < 10; ++v) CHECK(b.labels[v] == (v < 5 ? 0 : 1));
  CHECK(b.balance == 1.0);
  CHECK(brute_force_min_cut(g, 0.05).cut_weight == 1.0);
  CHECK(enumerate_min_cut(g, 0.05) == 1.0);
}

TEST_CASE("path of four with zero tolerance") {
  const SparseGraph g = path_graph(4);
  const Bisection b = bisect(g, 0.0, 3);
  CHECK(b.labels == std::vector<std::uint8_t>{0, 0, 1, 1});
  CHECK(b.cut_weight == 1.0);
  CHECK(brute_force_min_cut(g, 0.0).labels == std::vector<std::uint8_t>{0, 0, 1, 1});
}

TEST_CASE("brute force examples") {
  const SparseGraph edge = SparseGraph::from_edges(2, {{0, 1, 0.25}});
  const Bisection one = brute_force_min_cut(edge, 0.05);
  CHECK(one.labels == std::vector<std::uint8_t>{0, 1});
  CHECK(one.cut_weight == 0.25);

  const SparseGraph cycle = SparseGraph::from_edges(4, {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {0, 3, 1.0}});
  const Bisection c = brute_force_min_cut(cycle, 0.0);
  CHECK(c.cut_weight == 2.0);
  CHECK(c.labels == std::vector<std::uint8_t>{0, 0, 1, 1});
  CHECK(bisect(cycle, 0.0, 9).cut_weight == 2.0);
}

TEST_CASE("brute force guards") {
  CHECK_THROWS_AS(brute_force_min_cut(path_graph(21), 0.05), std::invalid_argument);
  CHECK_THROWS_AS(brute_force_min_cut(SparseGraph::from_edges(1, {}), 0.05), std::invalid_argument);
  CHECK_NOTHROW(brute_force_min_cut(path_graph(20), 0.05));
}

TEST_CASE("bisect rejects invalid input") {
  CHECK_THROWS_AS(bisect(SparseGraph::from_edges(1, {}), 0.05, 0), std::invalid_argument);
  CHECK_THROWS_AS(bisect(SparseGraph::from_edges(4, {{0, 1, 1.0}, {2, 3, 1.0}}), 0.05, 0), std::invalid_argument);
  CHECK_THROWS_AS(bisect(path_graph(4), 0.6, 0), std::invalid_argument);
  CHECK_THROWS_AS(bisect(path_graph(4), -0.1, 0), std::invalid_argument);
}

TEST_CASE("brute force agrees with independent enumeration") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const SparseGraph g = oracle::random_connected_graph(6 + seed % 7, 0.3, 1000 + seed);
    for (double eps : {0.0, 0.05, 0.3}) {
      const Bisection b = brute_force_min_cut(g, eps);
      check_valid(g, b, eps);
      CHECK(b.cut_weight == doctest::Approx(enumerate_min_cut(g, eps)).epsilon(1e-12));
    }
  }
}

TEST_CASE("bisect on random 12-vertex graphs never beats the exhaustive optimum") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const SparseGraph g = oracle::random_connected_graph(12, 0.25, 2000 + seed);
    const Bisection b = bisect(g, 0.05, seed);
    check_valid(g, b, 0.05);
    CHECK(b.cut_weight >= brute_force_min_cut(g, 0.05).cut_weight - 1e-12);
  }
}

TEST_CASE("bisect stays within 1.5x of optimal on a fixed corpus") {
  int worse = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const std::size_t n = 4 + seed % 13;
    const SparseGraph g = oracle::random_connected_graph(n, 0.2 + 0.003 * static_cast<double>(seed), 5000 + seed);
    const Bisection b = bisect(g, 0.05, seed);
    check_valid(g, b, 0.05);
    const double best = brute_force_min_cut(g, 0.05).cut_weight;
    CHECK(b.cut_weight >= best - 1e-12);
    if (b.cut_weight > 1.5 * best + 1e-12) ++worse;
  }
  CHECK(worse == 0);
}

TEST_CASE("planted two-block graphs are recovered") {
  int recovered = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SparseGraph g = oracle::sbm_graph(200, 0.2, 0.01, 300 + seed);
    REQUIRE(is_connected(g));
    const Bisection b = bisect(g, 0.05, seed);
    check_valid(g, b, 0.05);
    std::size_t agree = 0;
    for (std::size_t v = 0; v < 200; ++v) agree += (b.labels[v] == (v < 100 ? 0 : 1));
    const double accuracy = static_cast<double>(std::max(agree, 200 - agree)) / 200.0;
    if (accuracy >= 0.95) ++recovered;
  }
  CHECK(recovered >= 18);
}

TEST_CASE("bisect is deterministic and respects balance") {
  Rng rng(4);
  for (int trial = 0; trial < 15; ++trial) {
    const std::size_t n = 2 + rng.below(300);
    const SparseGraph g = oracle::random_connected_graph(n, 6.0 / static_cast<double>(n), rng());
    const double eps = rng.uniform(0.0, 0.5);
    const std::uint64_t seed = rng();
    const Bisection a = bisect(g, eps, seed);
    const Bisection b = bisect(g, eps, seed);
    check_valid(g, a, eps);
    CHECK(a.labels == b.labels);
    CHECK(a.cut_weight == b.cut_weight);
    CHECK(a.balance <= 1.0 + eps + 1.0 / static_cast<double>(n));
  }
}

TEST_CASE("max side size") {
  CHECK(max_side_size(4, 0.0) == 2);
  CHECK(max_side_size(5, 0.0) == 3);
  CHECK(max_side_size(100, 0.05) == 52);
  CHECK(max_side_size(10, 0.5) == 7);
}
