#include "msb/kgraph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>

#include "msb/error.hpp"
#include "msb/rng.hpp"

namespace msb {

namespace {

constexpr std::size_t kLanes = 8;
constexpr std::size_t kColumnChunk = 1024;

// Adds (a[k] - b[k])^2 into lane k % 8. Every distance in this module goes
// through this loop, so chunked and unchunked evaluation give identical sums.
inline void accumulate_lanes(const double* a, const double* b, std::size_t begin, std::size_t end, double* acc) {
  std::size_t k = begin;
  for (; k + kLanes <= end; k += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      const double d = a[k + l] - b[k + l];
      acc[l] += d * d;
    }
  }
  for (std::size_t l = 0; k < end; ++k, ++l) {
    const double d = a[k] - b[k];
    acc[l] += d * d;
  }
}

inline double reduce_lanes(const double* acc) {
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

double kernel_weight(double sq, double bandwidth) { return std::exp(-sq / bandwidth); }

void check_rows_finite(const Matrix& x) {
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (!std::isfinite(x(i, j)))
        throw DataError("graph construction: non-finite value at row " + std::to_string(i) + ", column " +
                        std::to_string(j));
}

void check_bandwidth(double bandwidth) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
    throw std::invalid_argument("kernel bandwidth must be positive and finite");
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

SparseGraph SparseGraph::from_edges(std::size_t n_vertices, std::vector<WeightedEdge> edges) {
  SparseGraph g;
  g.offsets_.assign(n_vertices + 1, 0);
  for (const auto& e : edges) {
    if (e.u == e.v) throw std::invalid_argument("self-loop on vertex " + std::to_string(e.u));
    if (e.u >= n_vertices || e.v >= n_vertices) throw std::invalid_argument("edge endpoint out of range");
    ++g.offsets_[e.u + 1];
    ++g.offsets_[e.v + 1];
  }
  for (std::size_t v = 0; v < n_vertices; ++v) g.offsets_[v + 1] += g.offsets_[v];
  std::vector<std::pair<std::uint32_t, double>> slots(g.offsets_.back());
  std::vector<std::size_t> fill(g.offsets_.begin(), g.offsets_.end() - 1);
  for (const auto& e : edges) {
    slots[fill[e.u]++] = {e.v, e.weight};
    slots[fill[e.v]++] = {e.u, e.weight};
  }
  g.targets_.resize(slots.size());
  g.weights_.resize(slots.size());
  for (std::size_t v = 0; v < n_vertices; ++v) {
    auto first = slots.begin() + static_cast<std::ptrdiff_t>(g.offsets_[v]);
    auto last = slots.begin() + static_cast<std::ptrdiff_t>(g.offsets_[v + 1]);
    std::sort(first, last, [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto it = first; it != last; ++it) {
      if (it != first && (it - 1)->first == it->first)
        throw std::invalid_argument("duplicate edge " + std::to_string(v) + "-" + std::to_string(it->first));
      const auto pos = static_cast<std::size_t>(it - slots.begin());
      g.targets_[pos] = it->first;
      g.weights_[pos] = it->second;
    }
  }
  return g;
}

std::vector<WeightedEdge> SparseGraph::edges() const {
  std::vector<WeightedEdge> out;
  out.reserve(n_edges());
  for (std::size_t u = 0; u < n_vertices(); ++u) {
    const auto nb = neighbors(u);
    const auto w = weights(u);
    for (std::size_t k = 0; k < nb.size(); ++k)
      if (nb[k] > u) out.push_back({static_cast<std::uint32_t>(u), nb[k], w[k]});
  }
  return out;
}

void SparseGraph::check_invariants() const {
  for (std::size_t u = 0; u < n_vertices(); ++u) {
    const auto nb = neighbors(u);
    const auto w = weights(u);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      if (nb[k] == u) throw std::logic_error("self-loop at vertex " + std::to_string(u));
      if (k > 0 && nb[k - 1] >= nb[k]) throw std::logic_error("neighbor list of " + std::to_string(u) + " not sorted");
      if (!(w[k] > 0.0 && w[k] <= 1.0)) throw std::logic_error("edge weight outside (0, 1]");
      const auto back = neighbors(nb[k]);
      const auto it = std::lower_bound(back.begin(), back.end(), static_cast<std::uint32_t>(u));
      if (it == back.end() || *it != u) throw std::logic_error("asymmetric edge " + std::to_string(u));
      if (weights(nb[k])[static_cast<std::size_t>(it - back.begin())] != w[k])
        throw std::logic_error("asymmetric edge weight at " + std::to_string(u));
    }
  }
}

std::vector<std::uint32_t> connected_components(const SparseGraph& g, std::size_t* count) {
  constexpr auto unset = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> comp(g.n_vertices(), unset);
  std::vector<std::uint32_t> queue;
  std::uint32_t next = 0;
  for (std::size_t s = 0; s < g.n_vertices(); ++s) {
    if (comp[s] != unset) continue;
    queue.assign(1, static_cast<std::uint32_t>(s));
    comp[s] = next;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      for (std::uint32_t v : g.neighbors(queue[head])) {
        if (comp[v] == unset) {
          comp[v] = next;
          queue.push_back(v);
        }
      }
    }
    ++next;
  }
  if (count) *count = next;
  return comp;
}

bool is_connected(const SparseGraph& g) {
  std::size_t count = 0;
  connected_components(g, &count);
  return count <= 1;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("distance between vectors of length " + std::to_string(a.size()) + " and " +
                                std::to_string(b.size()));
  double acc[kLanes] = {};
  accumulate_lanes(a.data(), b.data(), 0, a.size(), acc);
  return reduce_lanes(acc);
}

double pairwise_distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

KernelChoice choose_kernel(const Matrix& x, std::size_t target_avg_degree, const KernelOptions& options) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < 2) throw std::invalid_argument("threshold selection needs at least two rows");
  if (target_avg_degree == 0) throw std::invalid_argument("target average degree must be positive");
  if (target_avg_degree > n - 1)
    throw std::invalid_argument("target average degree " + std::to_string(target_avg_degree) +
                                " exceeds n - 1 = " + std::to_string(n - 1));
  check_rows_finite(x);

  const std::size_t all_pairs = n * (n - 1) / 2;
  KernelChoice choice;
  std::vector<double> sq;
  if (all_pairs <= options.max_pairs) {
    sq.reserve(all_pairs);
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = u + 1; v < n; ++v) sq.push_back(squared_distance(row_span(x, u), row_span(x, v)));
  } else {
    choice.subsampled = true;
    sq.reserve(options.max_pairs);
    Rng rng = Rng::stream(options.seed, {0x7468726573ULL});
    while (sq.size() < options.max_pairs) {
      const std::size_t u = rng.below(n);
      const std::size_t v = rng.below(n);
      if (u == v) continue;
      sq.push_back(squared_distance(row_span(x, std::min(u, v)), row_span(x, std::max(u, v))));
    }
  }
  choice.pairs_used = sq.size();

  if (options.bandwidth) {
    check_bandwidth(*options.bandwidth);
    choice.bandwidth = *options.bandwidth;
  } else {
    auto mid = sq.begin() + static_cast<std::ptrdiff_t>(sq.size() / 2);
    std::nth_element(sq.begin(), mid, sq.end());
    choice.bandwidth = *mid > 0.0 ? *mid : 1.0;
  }

  const double fraction = static_cast<double>(target_avg_degree) / static_cast<double>(n - 1);
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(sq.size())));
  if (keep >= sq.size()) {
    const double widest = *std::max_element(sq.begin(), sq.end());
    const double w = kernel_weight(widest, choice.bandwidth);
    choice.threshold = w > 0.0 ? std::nextafter(w, 0.0) : 0.0;
  } else {
    auto kth = sq.begin() + static_cast<std::ptrdiff_t>(keep);
    std::nth_element(sq.begin(), kth, sq.end());
    choice.threshold = kernel_weight(*kth, choice.bandwidth);
  }
  return choice;
}

double select_threshold(const Matrix& x, std::size_t target_avg_degree, double bandwidth) {
  KernelOptions options;
  options.bandwidth = bandwidth;
  return choose_kernel(x, target_avg_degree, options).threshold;
}

SparseGraph build_graph(const Matrix& x, double t, const GraphBuildOptions& options, GraphBuildSummary* summary) {
  if (!(t >= 0.0 && t < 1.0)) throw std::invalid_argument("graph threshold must lie in [0, 1)");
  check_bandwidth(options.bandwidth);
  check_rows_finite(x);
  const auto n = static_cast<std::size_t>(x.rows());
  const auto p = static_cast<std::size_t>(x.cols());
  const std::size_t block = std::max<std::size_t>(1, options.block_rows);
  const std::size_t tiles = (n + block - 1) / block;

  std::vector<std::pair<std::size_t, std::size_t>> tile_pairs;
  for (std::size_t i = 0; i < tiles; ++i)
    for (std::size_t j = i; j < tiles; ++j) tile_pairs.emplace_back(i, j);
  std::vector<std::vector<WeightedEdge>> found(tile_pairs.size());

  auto work = [&](std::size_t worker, std::size_t workers) {
    std::vector<double> acc(block * block * kLanes);
    for (std::size_t tp = worker; tp < tile_pairs.size(); tp += workers) {
      const std::size_t u0 = tile_pairs[tp].first * block;
      const std::size_t u1 = std::min(n, u0 + block);
      const std::size_t v0 = tile_pairs[tp].second * block;
      const std::size_t v1 = std::min(n, v0 + block);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t c0 = 0; c0 < p; c0 += kColumnChunk) {
        const std::size_t c1 = std::min(p, c0 + kColumnChunk);
        for (std::size_t u = u0; u < u1; ++u) {
          const double* a = x.data() + u * p;
          for (std::size_t v = std::max(v0, u + 1); v < v1; ++v) {
            accumulate_lanes(a, x.data() + v * p, c0, c1, &acc[((u - u0) * block + (v - v0)) * kLanes]);
          }
        }
      }
      auto& out = found[tp];
      for (std::size_t u = u0; u < u1; ++u) {
        for (std::size_t v = std::max(v0, u + 1); v < v1; ++v) {
          const double w = kernel_weight(reduce_lanes(&acc[((u - u0) * block + (v - v0)) * kLanes]), options.bandwidth);
          if (w > t) out.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v), w});
        }
      }
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(options.threads, 1, std::max<std::size_t>(1, tile_pairs.size()));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }

  std::vector<WeightedEdge> edges;
  for (auto& part : found) edges.insert(edges.end(), part.begin(), part.end());
  SparseGraph g = SparseGraph::from_edges(n, std::move(edges));
  g.check_invariants();
  if (summary) {
    summary->n_vertices = n;
    summary->n_edges = g.n_edges();
    summary->average_degree = n ? 2.0 * static_cast<double>(g.n_edges()) / static_cast<double>(n) : 0.0;
    summary->isolated.clear();
    for (std::size_t v = 0; v < n; ++v)
      if (g.degree(v) == 0) summary->isolated.push_back(static_cast<std::uint32_t>(v));
  }
  return g;
}

SparseGraph build_graph_naive(const Matrix& x, double t, double bandwidth) {
  if (!(t >= 0.0 && t < 1.0)) throw std::invalid_argument("graph threshold must lie in [0, 1)");
  check_bandwidth(bandwidth);
  check_rows_finite(x);
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<WeightedEdge> edges;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const double w = kernel_weight(squared_distance(row_span(x, u), row_span(x, v)), bandwidth);
      if (w > t) edges.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v), w});
    }
  }
  return SparseGraph::from_edges(n, std::move(edges));
}

SparseGraph attach_isolated(const SparseGraph& g, const Matrix& x, double bandwidth) {
  check_bandwidth(bandwidth);
  const std::size_t n = g.n_vertices();
  if (static_cast<std::size_t>(x.rows()) != n) throw std::invalid_argument("attach_isolated: row count mismatch");
  auto edges = g.edges();
  std::set<std::pair<std::uint32_t, std::uint32_t>> added;
  for (std::size_t u = 0; u < n; ++u) {
    if (g.degree(u) != 0 || n < 2) continue;
    std::size_t best = n;
    double best_sq = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < n; ++v) {
      if (v == u) continue;
      const double sq = squared_distance(row_span(x, std::min(u, v)), row_span(x, std::max(u, v)));
      if (sq < best_sq) {
        best_sq = sq;
        best = v;
      }
    }
    const auto a = static_cast<std::uint32_t>(std::min(u, best));
    const auto b = static_cast<std::uint32_t>(std::max(u, best));
    if (!added.insert({a, b}).second) continue;
    const double w = std::clamp(kernel_weight(best_sq, bandwidth), std::numeric_limits<double>::min(), 1.0);
    edges.push_back({a, b, w});
  }
  return SparseGraph::from_edges(n, std::move(edges));
}

void save_edge_list(const SparseGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << g.n_vertices() << ' ' << g.n_edges() << '\n';
  for (const auto& e : g.edges()) out << e.u << ' ' << e.v << ' ' << format_double(e.weight) << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

SparseGraph load_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header line");
  std::istringstream header(line);
  std::size_t n = 0;
  std::size_t m = 0;
  if (!(header >> n >> m)) throw DataError(path.string() + ": malformed header \"" + line + "\"");
  std::vector<WeightedEdge> edges;
  edges.reserve(m);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::uint64_t u = 0;
    std::uint64_t v = 0;
    std::string wtext;
    if (!(fields >> u >> v >> wtext))
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": expected \"u v w\"");
    double w = 0.0;
    const auto [ptr, ec] = std::from_chars(wtext.data(), wtext.data() + wtext.size(), w);
    if (ec != std::errc() || ptr != wtext.data() + wtext.size() || !(w > 0.0 && w <= 1.0))
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": invalid weight \"" + wtext + "\"");
    if (u >= v || v >= n)
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": need u < v < n_vertices");
    edges.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v), w});
  }
  if (edges.size() != m)
    throw DataError(path.string() + ": header declares " + std::to_string(m) + " edges, found " +
                    std::to_string(edges.size()));
  try {
    return SparseGraph::from_edges(n, std::move(edges));
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace msb
