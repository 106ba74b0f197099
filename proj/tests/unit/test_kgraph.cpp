#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "msb/error.hpp"
#include "msb/kgraph.hpp"
#include "msb/rng.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace msb;

namespace {

using EdgeKey = std::pair<std::uint32_t, std::uint32_t>;

std::set<EdgeKey> edge_keys(const std::vector<WeightedEdge>& edges) {
  std::set<EdgeKey> out;
  for (const auto& e : edges) out.insert({e.u, e.v});
  return out;
}

double average_degree(const SparseGraph& g) {
  return 2.0 * static_cast<double>(g.n_edges()) / static_cast<double>(g.n_vertices());
}

}  // namespace

TEST_CASE("pairwise distance examples") {
  const std::vector<double> a{0.0, 0.0};
  const std::vector<double> b{3.0, 4.0};
  CHECK(pairwise_distance(a, a) == 0.0);
  CHECK(pairwise_distance(a, b) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(squared_distance(a, b) == 25.0);

  const std::vector<double> short_vec{1.0};
  CHECK_THROWS_AS(pairwise_distance(a, short_vec), std::invalid_argument);
}

TEST_CASE("pairwise distance is symmetric and matches a plain loop") {
  const Matrix x = oracle::gaussian_matrix(30, 37, 5);
  for (std::size_t i = 0; i < 30; ++i) {
    for (std::size_t j = 0; j < 30; ++j) {
      const double d = pairwise_distance(row_span(x, i), row_span(x, j));
      CHECK(d >= 0.0);
      CHECK(d == pairwise_distance(row_span(x, j), row_span(x, i)));
      double plain = 0.0;
      for (Eigen::Index k = 0; k < x.cols(); ++k) plain += (x(i, k) - x(j, k)) * (x(i, k) - x(j, k));
      CHECK(d == doctest::Approx(std::sqrt(plain)).epsilon(1e-12));
    }
  }
}

TEST_CASE("threshold for three equidistant points gives the complete graph") {
  Matrix x(3, 2);
  x << 0.0, 0.0, 1.0, 0.0, 0.5, std::sqrt(3.0) / 2.0;
  Matrix y(3, 3);
  y << 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0;
  const double t = select_threshold(y, 2);
  const double w = std::exp(-2.0);
  CHECK(t < w);
  CHECK(t == std::nextafter(w, 0.0));
  const SparseGraph g = build_graph(y, t);
  CHECK(g.n_edges() == 3);
  for (const auto& e : g.edges()) CHECK(e.weight == w);

  const SparseGraph g2 = build_graph(x, select_threshold(x, 2));
  CHECK(g2.n_edges() == 3);
}

TEST_CASE("threshold selection rejects degenerate targets") {
  const Matrix x = oracle::gaussian_matrix(10, 3, 1);
  CHECK_THROWS_AS(select_threshold(x, 0), std::invalid_argument);
  CHECK_THROWS_AS(select_threshold(x, 10), std::invalid_argument);
  CHECK_THROWS_AS(select_threshold(oracle::gaussian_matrix(1, 3, 1), 1), std::invalid_argument);
}

TEST_CASE("threshold hits the target degree on Gaussian rows") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Matrix x = oracle::gaussian_matrix(100, 10, seed);
    const double t = select_threshold(x, 20);
    const auto edges = oracle::brute_force_edges(x, t);
    const double degree = 2.0 * static_cast<double>(edges.size()) / 100.0;
    CHECK(degree >= 19.0);
    CHECK(degree <= 21.0);
  }
}

TEST_CASE("subsampled threshold stays close to the target") {
  const Matrix x = oracle::gaussian_matrix(400, 5, 9);
  KernelOptions options;
  options.max_pairs = 20'000;
  options.seed = 4;
  const KernelChoice choice = choose_kernel(x, 20, options);
  CHECK(choice.subsampled);
  CHECK(choice.pairs_used == 20'000);
  const double degree = average_degree(build_graph(x, choice.threshold));
  CHECK(degree > 17.0);
  CHECK(degree < 23.0);
}

TEST_CASE("automatic bandwidth is the median squared distance") {
  const Matrix x = oracle::gaussian_matrix(41, 4, 3);
  std::vector<double> sq;
  for (std::size_t u = 0; u < 41; ++u)
    for (std::size_t v = u + 1; v < 41; ++v) sq.push_back(squared_distance(row_span(x, u), row_span(x, v)));
  std::sort(sq.begin(), sq.end());
  KernelOptions options;
  options.bandwidth.reset();
  const KernelChoice choice = choose_kernel(x, 5, options);
  CHECK(choice.bandwidth == sq[sq.size() / 2]);
  CHECK_FALSE(choice.subsampled);
}

TEST_CASE("graph build examples") {
  Matrix same(2, 3);
  same << 1.0, 2.0, 3.0, 1.0, 2.0, 3.0;
  const SparseGraph g = build_graph(same, 0.999);
  REQUIRE(g.n_edges() == 1);
  CHECK(g.edges()[0].weight == 1.0);

  Matrix far(2, 1);
  far << 0.0, 10.0;
  GraphBuildSummary summary;
  const SparseGraph h = build_graph(far, 0.5, {}, &summary);
  CHECK(h.n_edges() == 0);
  CHECK(summary.isolated == std::vector<std::uint32_t>{0, 1});

  CHECK_THROWS_AS(build_graph(same, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_graph(same, -0.1), std::invalid_argument);
  Matrix bad = same;
  bad(1, 2) = std::nan("");
  CHECK_THROWS_AS(build_graph(bad, 0.5), DataError);
}

TEST_CASE("blocked build equals the brute-force edge set") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const Matrix x = oracle::gaussian_matrix(50, 6, seed);
    const double t = select_threshold(x, 8);
    GraphBuildOptions options;
    options.block_rows = 7;
    const SparseGraph g = build_graph(x, t, options);
    const auto reference = oracle::brute_force_edges(x, t);
    const auto got = g.edges();
    REQUIRE(got.size() == reference.size());
    CHECK(edge_keys(got) == edge_keys(reference));
    for (std::size_t k = 0; k < got.size(); ++k)
      CHECK(got[k].weight == doctest::Approx(reference[k].weight).epsilon(1e-12));
    CHECK(g == build_graph_naive(x, t));
  }
}

TEST_CASE("block size, column chunking and threads do not change the graph") {
  const Matrix x = oracle::gaussian_matrix(90, 2100, 21);
  KernelOptions kopts;
  kopts.bandwidth.reset();
  const KernelChoice choice = choose_kernel(x, 10, kopts);
  GraphBuildOptions base;
  base.bandwidth = choice.bandwidth;
  const SparseGraph reference = build_graph_naive(x, choice.threshold, choice.bandwidth);
  for (std::size_t block : {1u, 16u, 64u, 200u}) {
    for (std::size_t threads : {1u, 3u}) {
      GraphBuildOptions o = base;
      o.block_rows = block;
      o.threads = threads;
      CHECK(build_graph(x, choice.threshold, o) == reference);
    }
  }
}

TEST_CASE("raising the threshold only removes edges") {
  const Matrix x = oracle::gaussian_matrix(60, 4, 8);
  std::set<EdgeKey> previous = edge_keys(build_graph(x, 0.0).edges());
  for (double t : {0.001, 0.01, 0.05, 0.1, 0.3, 0.6, 0.9}) {
    const auto current = edge_keys(build_graph(x, t).edges());
    CHECK(std::includes(previous.begin(), previous.end(), current.begin(), current.end()));
    CHECK(current.size() <= previous.size());
    previous = current;
  }
}

TEST_CASE("constructed graphs satisfy the structural invariants") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 5 + rng.below(60);
    const Matrix x = oracle::gaussian_matrix(n, 1 + rng.below(8), rng());
    const SparseGraph g = build_graph(x, rng.uniform(0.0, 0.5));
    CHECK_NOTHROW(g.check_invariants());
    for (std::size_t v = 0; v < g.n_vertices(); ++v)
      for (double w : g.weights(v)) CHECK((w > 0.0 && w <= 1.0));
  }
}

TEST_CASE("from_edges rejects malformed edge lists") {
  CHECK_THROWS_AS(SparseGraph::from_edges(3, {{1, 1, 0.5}}), std::invalid_argument);
  CHECK_THROWS_AS(SparseGraph::from_edges(3, {{0, 3, 0.5}}), std::invalid_argument);
  CHECK_THROWS_AS(SparseGraph::from_edges(3, {{0, 1, 0.5}, {1, 0, 0.5}}), std::invalid_argument);
}

TEST_CASE("isolated vertices attach to their nearest neighbour") {
  Matrix x(5, 1);
  x << 0.0, 0.1, 5.0, 9.0, 9.05;
  GraphBuildSummary summary;
  const SparseGraph g = build_graph(x, 0.5, {}, &summary);
  CHECK(summary.isolated == std::vector<std::uint32_t>{2});
  const SparseGraph h = attach_isolated(g, x);
  CHECK_NOTHROW(h.check_invariants());
  REQUIRE(h.degree(2) == 1);
  CHECK(h.neighbors(2)[0] == 3);
  CHECK(h.n_edges() == g.n_edges() + 1);

  // Mutual nearest isolated pair gets a single edge.
  Matrix pair(2, 1);
  pair << 0.0, 100.0;
  const SparseGraph lone = attach_isolated(build_graph(pair, 0.5), pair);
  CHECK(lone.n_edges() == 1);
  CHECK(lone.weights(0)[0] > 0.0);
}

TEST_CASE("connected components are numbered by lowest vertex") {
  const SparseGraph g = SparseGraph::from_edges(6, {{0, 3, 1.0}, {1, 2, 1.0}, {4, 5, 1.0}});
  std::size_t count = 0;
  const auto comp = connected_components(g, &count);
  CHECK(count == 3);
  CHECK(comp == std::vector<std::uint32_t>{0, 1, 1, 0, 2, 2});
  CHECK_FALSE(is_connected(g));
  CHECK(is_connected(oracle::random_connected_graph(30, 0.1, 3)));
}

TEST_CASE("edge list round trip is exact") {
  const fs::path dir = fs::temp_directory_path() / "msb_test_kgraph";
  fs::create_directories(dir);
  const Matrix x = oracle::gaussian_matrix(40, 3, 2);
  const SparseGraph g = build_graph(x, select_threshold(x, 6));
  save_edge_list(g, dir / "g.txt");
  CHECK(load_edge_list(dir / "g.txt") == g);

  std::ofstream(dir / "bad.txt") << "3 1\n0 1 1.5\n";
  CHECK_THROWS_AS(load_edge_list(dir / "bad.txt"), DataError);
  std::ofstream(dir / "count.txt") << "3 2\n0 1 0.5\n";
  CHECK_THROWS_AS(load_edge_list(dir / "count.txt"), DataError);
  std::ofstream(dir / "order.txt") << "3 1\n2 1 0.5\n";
  CHECK_THROWS_AS(load_edge_list(dir / "order.txt"), DataError);
  CHECK_THROWS_AS(load_edge_list(dir / "missing.txt"), DataError);
}
