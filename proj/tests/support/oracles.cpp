#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

namespace oracle {

NigMoments nig_posterior(std::span<const double> y, double a, double b) {
  const double n = static_cast<double>(y.size());
  double sy = 0.0, syy = 0.0;
  for (double v : y) {
    sy += v;
    syy += v * v;
  }
  const double ybar = n > 0 ? sy / n : 0.0;
  const double shape = a + 0.5 * n;
  auto log_kernel = [&](double mu) {
    const double s = syy - 2.0 * mu * sy + n * mu * mu;
    return -0.5 * mu * mu - shape * std::log(b + 0.5 * s);
  };
  // The posterior of mu sits between 0 and ybar with width well under 10.
  const double lo = std::min(0.0, ybar) - 12.0;
  const double hi = std::max(0.0, ybar) + 12.0;
  const int steps = 400000;
  const double h = (hi - lo) / steps;
  double top = -1e300;
  for (int k = 0; k <= steps; ++k) top = std::max(top, log_kernel(lo + k * h));
  double z = 0.0, m1 = 0.0, s1 = 0.0;
  for (int k = 0; k <= steps; ++k) {
    const double mu = lo + k * h;
    const double w = (k == 0 || k == steps ? 0.5 : 1.0) * std::exp(log_kernel(mu) - top);
    const double s = syy - 2.0 * mu * sy + n * mu * mu;
    z += w;
    m1 += w * mu;
    s1 += w * (b + 0.5 * s) / (shape - 1.0);
  }
  return {m1 / z, s1 / z};
}

double batch_means_se(std::span<const double> trace, std::size_t batches) {
  const std::size_t len = trace.size() / batches;
  std::vector<double> means(batches, 0.0);
  for (std::size_t k = 0; k < batches; ++k) {
    for (std::size_t t = 0; t < len; ++t) means[k] += trace[k * len + t];
    means[k] /= static_cast<double>(len);
  }
  const double m = mean(means);
  double ss = 0.0;
  for (double v : means) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(batches - 1) / static_cast<double>(batches));
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

msb::Matrix gaussian_matrix(std::size_t n, std::size_t p, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z;
  msb::Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = z(gen);
  return m;
}

msb::Matrix two_clusters(std::size_t n_each, std::size_t p, double sep, std::uint64_t seed) {
  msb::Matrix m = gaussian_matrix(2 * n_each, p, seed);
  for (std::size_t i = 0; i < 2 * n_each; ++i) m(static_cast<Eigen::Index>(i), 0) += i < n_each ? -sep / 2 : sep / 2;
  return m;
}

msb::SparseGraph random_connected_graph(std::size_t n, double density, std::uint64_t seed, bool unit_weights) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<char>> has(n, std::vector<char>(n, 0));
  std::vector<msb::WeightedEdge> edges;
  auto weight = [&] { return unit_weights ? 1.0 : std::max(0.05, std::round(u(gen) * 20.0) / 20.0); };
  for (std::size_t v = 1; v < n; ++v) {
    const std::size_t parent = std::uniform_int_distribution<std::size_t>(0, v - 1)(gen);
    has[parent][v] = has[v][parent] = 1;
    edges.push_back({static_cast<std::uint32_t>(parent), static_cast<std::uint32_t>(v), weight()});
  }
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (!has[a][b] && u(gen) < density) edges.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), weight()});
  return msb::SparseGraph::from_edges(n, std::move(edges));
}

msb::SparseGraph sbm_graph(std::size_t n, double p_in, double p_out, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<msb::WeightedEdge> edges;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      const bool same = (a < n / 2) == (b < n / 2);
      if (u(gen) < (same ? p_in : p_out)) edges.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), 1.0});
    }
  return msb::SparseGraph::from_edges(n, std::move(edges));
}

std::vector<msb::WeightedEdge> brute_force_edges(const msb::Matrix& x, double t, double bandwidth) {
  std::vector<msb::WeightedEdge> out;
  for (Eigen::Index u = 0; u < x.rows(); ++u)
    for (Eigen::Index v = u + 1; v < x.rows(); ++v) {
      double sq = 0.0;
      for (Eigen::Index j = 0; j < x.cols(); ++j) sq += (x(u, j) - x(v, j)) * (x(u, j) - x(v, j));
      const double w = std::exp(-sq / bandwidth);
      if (w > t) out.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v), w});
    }
  return out;
}

double ols_predict(const msb::Matrix& x, const msb::Vector& y, std::span<const double> query) {
  const Eigen::Index n = x.rows(), p = x.cols();
  Eigen::MatrixXd design(n, p + 1);
  design.col(0).setOnes();
  design.rightCols(p) = x;
  const Eigen::VectorXd coef = (design.transpose() * design).ldlt().solve(design.transpose() * y);
  double out = coef[0];
  for (Eigen::Index j = 0; j < p; ++j) out += coef[j + 1] * query[static_cast<std::size_t>(j)];
  return out;
}

double integrate(std::span<const double> grid, std::span<const double> f) {
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) s += (grid[k + 1] - grid[k]) * (f[k] + f[k + 1]) / 2.0;
  return s;
}

msb::PartitionTree halving_tree(const msb::Matrix& x, std::size_t depth) {
  const auto n = static_cast<std::size_t>(x.rows());
  struct Range {
    std::size_t begin, end;
  };
  std::vector<msb::TreeNode> nodes;
  std::vector<Range> ranges;
  nodes.emplace_back();
  ranges.push_back({0, n});
  std::vector<std::uint32_t> next_index(depth + 1, 0);
  next_index[0] = 1;
  for (std::size_t id = 0; id < nodes.size(); ++id) {
    const Range r = ranges[id];
    for (std::size_t i = r.begin; i < r.end; ++i) nodes[id].members.push_back(static_cast<std::uint32_t>(i));
    nodes[id].centroid.assign(static_cast<std::size_t>(x.cols()), 0.0);
    for (std::size_t i = r.begin; i < r.end; ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) nodes[id].centroid[j] += x(i, j) / static_cast<double>(r.end - r.begin);
    if (nodes[id].scale >= depth || r.end - r.begin < 2) continue;
    const std::size_t mid = r.begin + (r.end - r.begin) / 2;
    for (Range child : {Range{r.begin, mid}, Range{mid, r.end}}) {
      msb::TreeNode node;
      node.scale = nodes[id].scale + 1;
      node.index = next_index[node.scale]++;
      node.parent = static_cast<msb::NodeId>(id);
      nodes[id].children.push_back(static_cast<msb::NodeId>(nodes.size()));
      nodes.push_back(std::move(node));
      ranges.push_back(child);
    }
  }
  return msb::PartitionTree(std::move(nodes), {});
}

}  // namespace oracle
