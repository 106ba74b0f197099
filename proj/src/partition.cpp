#include "msb/partition.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

#include "msb/rng.hpp"

namespace msb {

namespace {

constexpr auto kUnset = std::numeric_limits<std::uint32_t>::max();

// Graph with vertex weights, one per coarsening level.
struct LevelGraph {
  std::vector<std::size_t> xadj{0};
  std::vector<std::uint32_t> adj;
  std::vector<double> adjw;
  std::vector<std::uint64_t> vwgt;

  std::size_t n() const { return vwgt.size(); }
  std::uint64_t total_weight() const { return std::accumulate(vwgt.begin(), vwgt.end(), std::uint64_t{0}); }
};

LevelGraph from_sparse(const SparseGraph& g) {
  LevelGraph lg;
  lg.vwgt.assign(g.n_vertices(), 1);
  lg.xadj.resize(g.n_vertices() + 1);
  for (std::size_t v = 0; v < g.n_vertices(); ++v) {
    const auto nb = g.neighbors(v);
    const auto w = g.weights(v);
    lg.adj.insert(lg.adj.end(), nb.begin(), nb.end());
    lg.adjw.insert(lg.adjw.end(), w.begin(), w.end());
    lg.xadj[v + 1] = lg.adj.size();
  }
  return lg;
}

struct Coarsened {
  LevelGraph graph;
  std::vector<std::uint32_t> cmap;
};

// Heavy-edge matching in seeded random visit order; ties to the lowest index.
Coarsened coarsen(const LevelGraph& g, Rng& rng, std::uint64_t max_vwgt) {
  const std::size_t n = g.n();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::uint32_t> match(n, kUnset);
  for (std::uint32_t v : order) {
    if (match[v] != kUnset) continue;
    std::uint32_t best = kUnset;
    double best_w = -1.0;
    for (std::size_t e = g.xadj[v]; e < g.xadj[v + 1]; ++e) {
      const std::uint32_t u = g.adj[e];
      if (match[u] != kUnset || g.vwgt[u] + g.vwgt[v] > max_vwgt) continue;
      if (g.adjw[e] > best_w) {
        best_w = g.adjw[e];
        best = u;
      }
    }
    if (best == kUnset) {
      match[v] = v;
    } else {
      match[v] = best;
      match[best] = v;
    }
  }

  Coarsened out;
  out.cmap.assign(n, kUnset);
  std::uint32_t next = 0;
  for (std::uint32_t v = 0; v < n; ++v) {
    if (out.cmap[v] != kUnset) continue;
    out.cmap[v] = next;
    out.cmap[match[v]] = next;
    ++next;
  }

  LevelGraph& c = out.graph;
  c.vwgt.assign(next, 0);
  std::vector<std::vector<std::uint32_t>> members(next);
  for (std::uint32_t v = 0; v < n; ++v) {
    c.vwgt[out.cmap[v]] += g.vwgt[v];
    members[out.cmap[v]].push_back(v);
  }
  std::vector<double> acc(next, 0.0);
  std::vector<std::uint32_t> touched;
  c.xadj.assign(1, 0);
  for (std::uint32_t cv = 0; cv < next; ++cv) {
    touched.clear();
    for (std::uint32_t v : members[cv]) {
      for (std::size_t e = g.xadj[v]; e < g.xadj[v + 1]; ++e) {
        const std::uint32_t cu = out.cmap[g.adj[e]];
        if (cu == cv) continue;
        if (acc[cu] == 0.0) touched.push_back(cu);
        acc[cu] += g.adjw[e];
      }
    }
    std::sort(touched.begin(), touched.end());
    for (std::uint32_t cu : touched) {
      c.adj.push_back(cu);
      c.adjw.push_back(acc[cu]);
      acc[cu] = 0.0;
    }
    c.xadj.push_back(c.adj.size());
  }
  return out;
}

std::vector<std::uint32_t> bfs_distances(const LevelGraph& g, std::uint32_t source) {
  std::vector<std::uint32_t> dist(g.n(), kUnset);
  std::vector<std::uint32_t> queue{source};
  dist[source] = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::uint32_t v = queue[head];
    for (std::size_t e = g.xadj[v]; e < g.xadj[v + 1]; ++e) {
      if (dist[g.adj[e]] == kUnset) {
        dist[g.adj[e]] = dist[v] + 1;
        queue.push_back(g.adj[e]);
      }
    }
  }
  return dist;
}

// Repeated BFS sweeps until eccentricity stops growing.
std::uint32_t pseudo_peripheral(const LevelGraph& g, std::uint32_t start) {
  std::uint32_t current = start;
  std::uint32_t ecc = 0;
  for (int sweep = 0; sweep < 8; ++sweep) {
    const auto dist = bfs_distances(g, current);
    std::uint32_t far = current;
    std::uint32_t far_d = 0;
    for (std::uint32_t v = 0; v < g.n(); ++v) {
      if (dist[v] != kUnset && dist[v] > far_d) {
        far_d = dist[v];
        far = v;
      }
    }
    if (sweep > 0 && far_d <= ecc) break;
    ecc = far_d;
    current = far;
  }
  return current;
}

// Greedy graph growing: side 1 starts at `seed_vertex` and absorbs the
// frontier vertex with the best cut gain until it holds half the weight.
std::vector<std::uint8_t> grow_region(const LevelGraph& g, std::uint32_t seed_vertex) {
  const std::size_t n = g.n();
  std::vector<std::uint8_t> labels(n, 0);
  std::vector<double> conn(n, 0.0);
  std::vector<double> wdeg(n, 0.0);
  for (std::uint32_t v = 0; v < n; ++v)
    for (std::size_t e = g.xadj[v]; e < g.xadj[v + 1]; ++e) wdeg[v] += g.adjw[e];

  const double half = static_cast<double>(g.total_weight()) / 2.0;
  std::set<std::pair<double, std::uint32_t>> frontier;
  std::uint64_t region = 0;
  std::uint32_t next = seed_vertex;
  while (static_cast<double>(region) < half) {
    if (next == kUnset) {
      for (std::uint32_t v = 0; v < n; ++v) {
        if (labels[v] == 0) {
          next = v;
          break;
        }
      }
      if (next == kUnset) break;
    }
    const std::uint32_t v = next;
    frontier.erase({-(2.0 * conn[v] - wdeg[v]), v});
    labels[v] = 1;
    region += g.vwgt[v];
    for (std::size_t e = g.xadj[v]; e < g.xadj[v + 1]; ++e) {
      const std::uint32_t u = g.adj[e];
      if (labels[u] == 1) continue;
      if (conn[u] > 0.0) frontier.erase({-(2.0 * conn[u] - wdeg[u]), u});
      conn[u] += g.adjw[e];
      frontier.insert({-(2.0 * conn[u] - wdeg[u]), u});
    }
    next = frontier.empty() ? kUnset : frontier.begin()->second;
  }
  return labels;
}

struct PartitionQuality {
  std::uint64_t excess = 0;
  double cut = 0.0;
};

bool better(const PartitionQuality& a, const PartitionQuality& b) {
  if (a.excess != b.excess) return a.excess < b.excess;
  return a.cut < b.cut - 1e-12 * (1.0 + std::abs(b.cut));
}

PartitionQuality evaluate(const LevelGraph& g, const std::vector<std::uint8_t>& labels, std::uint64_t max_side) {
  std::uint64_t side[2] = {0, 0};
  double cut = 0.0;
  for (std::uint32_t v = 0; v < g.n(); ++v) {
    side[labels[v]] += g.vwgt[v];
    for (std::size_t e = g.xadj[v]; e < g.xadj[v + 1]; ++e)
      if (g.adj[e] > v && labels[g.adj[e]] != labels[v]) cut += g.adjw[e];
  }
  const std::uint64_t heavy = std::max(side[0], side[1]);
  return {heavy > max_side ? heavy - max_side : 0, cut};
}

/// Boundary Fiduccia-Mattheyses. Each pass moves unlocked boundary vertices
/// one at a time (best gain first, subject to balance), then rolls back to the
/// best prefix. Stops after a pass without improvement.
void fm_refine(const LevelGraph& g, std::vector<std::uint8_t>& labels, std::uint64_t max_side, std::size_t max_passes) {
  const std::size_t n = g.n();
  if (n < 2) return;
  std::vector<double> id(n);
  std::vector<double> ed(n);
  std::vector<double> key(n);
  std::vector<std::uint8_t> in_bucket(n);
  std::vector<std::uint8_t> locked(n);
  const std::size_t stall_limit = std::max<std::size_t>(64, n / 8);

  for (std::size_t pass = 0; pass < max_passes; ++pass) {
    std::uint64_t side[2] = {0, 0};
    double cut = 0.0;
    std::set<std::pair<double, std::uint32_t>> bucket[2];
    for (std::uint32_t v = 0; v < n; ++v) {
      side[labels[v]] += g.vwgt[v];
      id[v] = ed[v] = 0.0;
      for (std::size_t e = g.xadj[v]; e < g.xadj[v + 1]; ++e) {
        (labels[g.adj[e]] == labels[v] ? id[v] : ed[v]) += g.adjw[e];
      }
      cut += ed[v];
      locked[v] = 0;
      in_bucket[v] = 0;
      if (ed[v] > 0.0) {
        key[v] = -(ed[v] - id[v]);
        bucket[labels[v]].insert({key[v], v});
        in_bucket[v] = 1;
      }
    }
    cut /= 2.0;

    auto excess_of = [&](std::uint64_t a, std::uint64_t b) {
      const std::uint64_t heavy = std::max(a, b);
      return heavy > max_side ? heavy - max_side : std::uint64_t{0};
    };
    PartitionQuality best{excess_of(side[0], side[1]), cut};
    std::size_t best_prefix = 0;
    std::size_t stall = 0;
    std::vector<std::uint32_t> moves;

    auto allowed = [&](std::uint32_t v) {
      const int from = labels[v];
      const std::uint64_t new_from = side[from] - g.vwgt[v];
      const std::uint64_t new_to = side[1 - from] + g.vwgt[v];
      if (new_from == 0) return false;
      if (new_to <= max_side) return true;
      return std::max(new_from, new_to) < std::max(side[0], side[1]);
    };

    while (true) {
      std::uint32_t pick[2] = {kUnset, kUnset};
      for (int s = 0; s < 2; ++s) {
        std::size_t scanned = 0;
        for (auto it = bucket[s].begin(); it != bucket[s].end() && scanned < 16; ++it, ++scanned) {
          if (allowed(it->second)) {
            pick[s] = it->second;
            break;
          }
        }
      }
      std::uint32_t v = kUnset;
      if (pick[0] != kUnset && pick[1] != kUnset) {
        const double g0 = -key[pick[0]];
        const double g1 = -key[pick[1]];
        if (g0 != g1) {
          v = g0 > g1 ? pick[0] : pick[1];
        } else if (side[0] != side[1]) {
          v = side[0] > side[1] ? pick[0] : pick[1];
        } else {
          v = std::min(pick[0], pick[1]);
        }
      } else {
        v = pick[0] != kUnset ? pick[0] : pick[1];
      }
      if (v == kUnset) break;

      const int from = labels[v];
      const int to = 1 - from;
      bucket[from].erase({key[v], v});
      in_bucket[v] = 0;
      locked[v] = 1;
      cut -= ed[v] - id[v];
      std::swap(id[v], ed[v]);
      labels[v] = static_cast<std::uint8_t>(to);
      side[from] -= g.vwgt[v];
      side[to] += g.vwgt[v];
      moves.push_back(v);

      for (std::size_t e = g.xadj[v]; e < g.xadj[v + 1]; ++e) {
        const std::uint32_t u = g.adj[e];
        const double w = g.adjw[e];
        if (labels[u] == to) {
          id[u] += w;
          ed[u] -= w;
        } else {
          id[u] -= w;
          ed[u] += w;
        }
        if (locked[u]) continue;
        if (in_bucket[u]) bucket[labels[u]].erase({key[u], u});
        in_bucket[u] = 0;
        if (ed[u] > 0.0) {
          key[u] = -(ed[u] - id[u]);
          bucket[labels[u]].insert({key[u], u});
          in_bucket[u] = 1;
        }
      }

      const PartitionQuality now{excess_of(side[0], side[1]), cut};
      if (better(now, best)) {
        best = now;
        best_prefix = moves.size();
        stall = 0;
      } else if (++stall > stall_limit) {
        break;
      }
    }

    for (std::size_t k = moves.size(); k > best_prefix; --k) labels[moves[k - 1]] ^= 1u;
    if (best_prefix == 0) break;
  }
}

// Moves best-gain vertices off the heavy side until the balance bound holds.
void force_balance(const LevelGraph& g, std::vector<std::uint8_t>& labels, std::uint64_t max_side) {
  std::uint64_t side[2] = {0, 0};
  for (std::uint32_t v = 0; v < g.n(); ++v) side[labels[v]] += g.vwgt[v];
  while (std::max(side[0], side[1]) > max_side) {
    const int heavy = side[0] > side[1] ? 0 : 1;
    std::uint32_t best = kUnset;
    double best_gain = -std::numeric_limits<double>::infinity();
    bool best_boundary = false;
    for (std::uint32_t v = 0; v < g.n(); ++v) {
      if (labels[v] != heavy || side[1 - heavy] + g.vwgt[v] >= side[heavy]) continue;
      double gain = 0.0;
      bool boundary = false;
      for (std::size_t e = g.xadj[v]; e < g.xadj[v + 1]; ++e) {
        if (labels[g.adj[e]] == heavy) {
          gain -= g.adjw[e];
        } else {
          gain += g.adjw[e];
          boundary = true;
        }
      }
      if ((boundary && !best_boundary) || (boundary == best_boundary && gain > best_gain)) {
        best = v;
        best_gain = gain;
        best_boundary = boundary;
      }
    }
    if (best == kUnset) break;
    labels[best] = static_cast<std::uint8_t>(1 - heavy);
    side[heavy] -= g.vwgt[best];
    side[1 - heavy] += g.vwgt[best];
  }
}

void check_epsilon(double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 0.5)) throw std::invalid_argument("balance tolerance must lie in [0, 0.5]");
}

Bisection finish(const SparseGraph& g, std::vector<std::uint8_t> labels) {
  if (!labels.empty() && labels[0] == 1)
    for (auto& l : labels) l ^= 1u;
  Bisection b;
  b.cut_weight = cut_weight(g, labels);
  const auto ones = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  const std::size_t heavy = std::max(ones, labels.size() - ones);
  b.balance = static_cast<double>(heavy) / (static_cast<double>(labels.size()) / 2.0);
  b.labels = std::move(labels);
  return b;
}

}  // namespace

std::size_t max_side_size(std::size_t n, double epsilon) {
  const std::size_t ceil_half = (n + 1) / 2;
  const auto relaxed = static_cast<std::size_t>(std::floor((1.0 + epsilon) * static_cast<double>(n) / 2.0 + 1e-9));
  return std::max(ceil_half, relaxed);
}

double cut_weight(const SparseGraph& g, std::span<const std::uint8_t> labels) {
  if (labels.size() != g.n_vertices()) throw std::invalid_argument("cut_weight: label count mismatch");
  double cut = 0.0;
  for (const auto& e : g.edges())
    if (labels[e.u] != labels[e.v]) cut += e.weight;
  return cut;
}

Bisection bisect(const SparseGraph& g, double epsilon, std::uint64_t seed) {
  BisectOptions options;
  options.epsilon = epsilon;
  options.seed = seed;
  return bisect(g, options);
}

Bisection bisect(const SparseGraph& g, const BisectOptions& options) {
  check_epsilon(options.epsilon);
  const std::size_t n = g.n_vertices();
  if (n < 2) throw std::invalid_argument("bisect: graph needs at least two vertices");
  if (!is_connected(g)) throw std::invalid_argument("bisect: graph is disconnected");

  const std::uint64_t max_side = max_side_size(n, options.epsilon);
  const std::size_t coarsest = std::max<std::size_t>(2, options.coarsest_size);
  Rng rng = Rng::stream(options.seed, {0x626973656374ULL});

  std::vector<LevelGraph> levels;
  std::vector<std::vector<std::uint32_t>> cmaps;
  levels.push_back(from_sparse(g));
  const auto max_vwgt = static_cast<std::uint64_t>(std::ceil(1.5 * static_cast<double>(n) / static_cast<double>(coarsest)));
  while (levels.back().n() > coarsest) {
    Coarsened c = coarsen(levels.back(), rng, std::max<std::uint64_t>(1, max_vwgt));
    if (static_cast<double>(c.graph.n()) > 0.9 * static_cast<double>(levels.back().n())) break;
    cmaps.push_back(std::move(c.cmap));
    levels.push_back(std::move(c.graph));
  }

  const LevelGraph& top = levels.back();
  std::vector<std::uint8_t> labels;
  PartitionQuality best_quality{std::numeric_limits<std::uint64_t>::max(), 0.0};
  const std::size_t trials = std::max<std::size_t>(1, options.initial_trials);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto start = static_cast<std::uint32_t>(t == 0 ? 0 : rng.below(top.n()));
    auto candidate = grow_region(top, pseudo_peripheral(top, start));
    fm_refine(top, candidate, max_side, options.max_refine_passes);
    const PartitionQuality q = evaluate(top, candidate, max_side);
    if (labels.empty() || better(q, best_quality)) {
      best_quality = q;
      labels = std::move(candidate);
    }
  }

  for (std::size_t level = levels.size() - 1; level > 0; --level) {
    const auto& cmap = cmaps[level - 1];
    std::vector<std::uint8_t> finer(cmap.size());
    for (std::size_t v = 0; v < cmap.size(); ++v) finer[v] = labels[cmap[v]];
    labels = std::move(finer);
    fm_refine(levels[level - 1], labels, max_side, options.max_refine_passes);
  }
  force_balance(levels.front(), labels, max_side);
  fm_refine(levels.front(), labels, max_side, options.max_refine_passes);
  return finish(g, std::move(labels));
}

Bisection brute_force_min_cut(const SparseGraph& g, double epsilon) {
  check_epsilon(epsilon);
  const std::size_t n = g.n_vertices();
  if (n > 20) throw std::invalid_argument("brute_force_min_cut: at most 20 vertices (got " + std::to_string(n) + ")");
  if (n < 2) throw std::invalid_argument("brute_force_min_cut: graph needs at least two vertices");
  const std::size_t max_side = max_side_size(n, epsilon);
  const auto edges = g.edges();

  // Vertex i is bit (n-1-i), so increasing masks walk label vectors in lexicographic order.
  std::uint64_t best_mask = 0;
  double best_cut = std::numeric_limits<double>::infinity();
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    const auto ones = static_cast<std::size_t>(std::popcount(mask));
    if (ones == 0 || ones == n || std::max(ones, n - ones) > max_side) continue;
    double cut = 0.0;
    for (const auto& e : edges)
      if (((mask >> (n - 1 - e.u)) & 1u) != ((mask >> (n - 1 - e.v)) & 1u)) cut += e.weight;
    if (!std::isfinite(best_cut) || cut < best_cut - 1e-12 * (1.0 + std::abs(best_cut))) {
      best_cut = cut;
      best_mask = mask;
    }
  }
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::uint8_t>((best_mask >> (n - 1 - i)) & 1u);
  return finish(g, std::move(labels));
}

}  // namespace msb
