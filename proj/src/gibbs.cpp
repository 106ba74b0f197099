#include "msb/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>

#include "binio.hpp"
#include "msb/error.hpp"
#include "msb/rng.hpp"

namespace msb {

namespace {

constexpr std::string_view kPosteriorMagic = "MSBP";
constexpr std::uint64_t kStepLevels = 0;
constexpr std::uint64_t kStepSticks = 1;
constexpr std::uint64_t kStepParams = 2;

double stream_uniform(std::uint64_t seed, std::uint64_t iteration, std::uint64_t step, std::uint64_t index) {
  return static_cast<double>(derive_seed(seed, {iteration, step, index}) >> 11) * 0x1.0p-53;
}

struct NodeTerms {
  std::vector<double> log_weight;  // log V + sum over ancestors of log(1 - V)
  std::vector<double> log_norm;    // -0.5 log(2 pi sigma)
  std::vector<double> half_prec;   // 0.5 / sigma
};

}  // namespace

Observations Observations::training(const PartitionTree& tree, std::span<const double> y,
                                    std::span<const std::size_t> rows) {
  if (y.size() != tree.n_observations())
    throw std::invalid_argument("response count " + std::to_string(y.size()) + " does not match tree rows " +
                                std::to_string(tree.n_observations()));
  Observations obs;
  if (rows.empty()) {
    for (std::size_t i = 0; i < y.size(); ++i) obs.push(tree.training_path(i), y[i]);
  } else {
    for (std::size_t i : rows) obs.push(tree.training_path(i), y[i]);
  }
  return obs;
}

void Observations::push(std::span<const NodeId> path, double y) {
  if (path.empty()) throw std::invalid_argument("observation path is empty");
  if (!std::isfinite(y)) throw std::invalid_argument("observation response is not finite");
  nodes_.insert(nodes_.end(), path.begin(), path.end());
  offsets_.push_back(nodes_.size());
  y_.push_back(y);
}

SufficientStats SufficientStats::from_scratch(std::size_t n_nodes, const Observations& obs,
                                              std::span<const std::uint32_t> levels) {
  if (levels.size() != obs.size()) throw std::invalid_argument("one level label per observation required");
  SufficientStats s;
  s.n_level.assign(n_nodes, 0);
  s.sum_y.assign(n_nodes, 0.0);
  s.sum_y_sq.assign(n_nodes, 0.0);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto path = obs.path(i);
    if (levels[i] >= path.size()) throw std::invalid_argument("level label beyond the observation's path");
    s.add(path[levels[i]], obs.y(i));
  }
  return s;
}

std::vector<std::uint64_t> SufficientStats::n_below(const PartitionTree& tree) const {
  std::vector<std::uint64_t> subtree(n_level);
  for (std::size_t id = tree.size(); id-- > 1;) subtree[*tree.node(static_cast<NodeId>(id)).parent] += subtree[id];
  for (std::size_t id = 0; id < subtree.size(); ++id) subtree[id] -= n_level[id];
  return subtree;
}

void SufficientStats::add(NodeId node, double y) {
  n_level[node] += 1;
  sum_y[node] += y;
  sum_y_sq[node] += y * y;
}

void SufficientStats::remove(NodeId node, double y) {
  if (n_level[node] == 0) throw std::logic_error("removing from an empty node");
  n_level[node] -= 1;
  sum_y[node] -= y;
  sum_y_sq[node] -= y * y;
}

double step_levels(const Observations& obs, MsbState& state, SufficientStats& stats, std::uint64_t seed,
                   std::size_t iteration, std::size_t threads) {
  const std::size_t n = obs.size();
  if (state.levels.size() != n) throw std::invalid_argument("state has the wrong number of level labels");
  const std::size_t n_nodes = state.nodes.size();

  NodeTerms terms;
  terms.log_weight.resize(n_nodes);
  terms.log_norm.resize(n_nodes);
  terms.half_prec.resize(n_nodes);
  std::vector<double> log_rest(n_nodes, 0.0);
  for (std::size_t id = 0; id < n_nodes; ++id) {
    const NodeParams& p = state.nodes[id];
    if (!(p.variance > 0.0)) throw NumericError("node " + std::to_string(id) + " has non-positive variance");
    terms.log_norm[id] = -0.5 * std::log(2.0 * std::numbers::pi * p.variance);
    terms.half_prec[id] = 0.5 / p.variance;
  }
  // Log path weights, filled top-down along the observed paths.
  std::vector<char> done(n_nodes, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto path = obs.path(i);
    double rest = 0.0;
    for (NodeId node : path) {
      if (!done[node]) {
        const double v = state.nodes[node].stick;
        terms.log_weight[node] = rest + std::log(v);
        log_rest[node] = rest + std::log1p(-v);
        done[node] = 1;
      }
      rest = log_rest[node];
    }
  }

  std::vector<std::uint32_t> next(n);
  std::vector<double> loglik(n);
  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<double> lp;
    for (std::size_t i = begin; i < end; ++i) {
      const auto path = obs.path(i);
      const double y = obs.y(i);
      lp.resize(path.size());
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < path.size(); ++j) {
        const NodeId node = path[j];
        const double d = y - state.nodes[node].mean;
        lp[j] = terms.log_weight[node] + terms.log_norm[node] - terms.half_prec[node] * d * d;
        top = std::max(top, lp[j]);
      }
      if (!std::isfinite(top)) throw NumericError("observation " + std::to_string(i) + " has zero probability on every level");
      double total = 0.0;
      for (double& v : lp) {
        v = std::exp(v - top);
        total += v;
      }
      const double target = stream_uniform(seed, iteration, kStepLevels, i) * total;
      std::uint32_t chosen = static_cast<std::uint32_t>(path.size() - 1);
      double cum = 0.0;
      for (std::size_t j = 0; j < path.size(); ++j) {
        cum += lp[j];
        if (target < cum) {
          chosen = static_cast<std::uint32_t>(j);
          break;
        }
      }
      while (lp[chosen] == 0.0 && chosen > 0) --chosen;
      next[i] = chosen;
      loglik[i] = top + std::log(total);
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, n / 256));
  if (workers == 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back(work, std::min(n, w * chunk), std::min(n, (w + 1) * chunk));
  }

  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += loglik[i];
    if (next[i] == state.levels[i]) continue;
    const auto path = obs.path(i);
    stats.remove(path[state.levels[i]], obs.y(i));
    stats.add(path[next[i]], obs.y(i));
    state.levels[i] = next[i];
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

void step_sticks(const PartitionTree& tree, const SufficientStats& stats, const Hyperparams& hyper, MsbState& state,
                 std::uint64_t seed, std::size_t iteration) {
  const auto below = stats.n_below(tree);
  for (NodeId id = 0; id < tree.size(); ++id) {
    if (tree.node(id).is_leaf()) {
      state.nodes[id].stick = 1.0;
      continue;
    }
    Rng rng = Rng::stream(seed, {iteration, kStepSticks, id});
    state.nodes[id].stick = rng.beta(1.0 + static_cast<double>(stats.n_level[id]),
                                     hyper.alpha + static_cast<double>(below[id]));
  }
}

void step_node_params(const PartitionTree& tree, const SufficientStats& stats, const Hyperparams& hyper,
                      MsbState& state, std::uint64_t seed, std::size_t iteration) {
  for (NodeId id = 0; id < tree.size(); ++id) {
    NodeParams& p = state.nodes[id];
    if (!(p.variance > 0.0)) throw NumericError("node " + std::to_string(id) + " has non-positive variance");
    Rng rng = Rng::stream(seed, {iteration, kStepParams, id});
    const double count = static_cast<double>(stats.n_level[id]);
    const double nu = count / p.variance;
    const double v = 1.0 / (1.0 + nu);
    p.mean = rng.normal(v * stats.sum_y[id] / p.variance, std::sqrt(v));
    const double ss = std::max(0.0, stats.sum_y_sq[id] - 2.0 * p.mean * stats.sum_y[id] + count * p.mean * p.mean);
    p.variance = rng.inv_gamma(hyper.a + 0.5 * count, hyper.b + 0.5 * ss);
    if (!(p.variance > 0.0) || !std::isfinite(p.variance))
      throw NumericError("variance draw for node " + std::to_string(id) + " is not positive and finite");
  }
}

PosteriorSamples run_gibbs(const PartitionTree& tree, const Observations& obs, const Hyperparams& hyper,
                           const GibbsOptions& options) {
  hyper.validate();
  if (options.thin == 0) throw std::invalid_argument("thin must be positive");
  for (std::size_t i = 0; i < obs.size(); ++i) check_path(tree, obs.path(i));

  const std::size_t budget = hyper.max_iters - hyper.burn_in;
  std::size_t thin = options.thin;
  if (options.max_draws > 0 && budget / thin > options.max_draws) thin = (budget + options.max_draws - 1) / options.max_draws;

  PosteriorSamples out;
  out.hyper = hyper;
  out.seed = options.seed;
  out.thin = thin;
  out.n_observations = obs.size();
  out.tree_fingerprint = tree_fingerprint(tree);
  out.n_nodes = tree.size();
  out.draws.reserve((budget / thin) * tree.size());
  out.loglik.reserve(hyper.max_iters);

  MsbState state = sample_prior(tree, hyper, derive_seed(options.seed, {0x696e6974ULL}));
  state.levels.assign(obs.size(), 0);
  SufficientStats stats = SufficientStats::from_scratch(tree.size(), obs, state.levels);

  for (std::size_t it = 1; it <= hyper.max_iters; ++it) {
    out.loglik.push_back(step_levels(obs, state, stats, options.seed, it, options.threads));
    step_sticks(tree, stats, hyper, state, options.seed, it);
    step_node_params(tree, stats, hyper, state, options.seed, it);
    out.iterations_run = it;
    if (options.observer) options.observer(it, state, stats);

    if (it <= hyper.burn_in || (it - hyper.burn_in) % thin != 0) continue;
    out.draws.insert(out.draws.end(), state.nodes.begin(), state.nodes.end());
    const std::size_t kept = out.n_draws();
    if (!options.early_stop || kept < 500 || kept % std::max<std::size_t>(1, options.diag_every) != 0) continue;
    const std::span<const double> trace(out.loglik.data() + hyper.burn_in, it - hyper.burn_in);
    if (trace.size() < 20 * options.diag_batch) continue;
    if (convergence_diagnostic(trace, options.diag_batch, options.diag_level).passed) {
      out.stopped_early = true;
      break;
    }
  }
  return out;
}

std::uint64_t tree_fingerprint(const PartitionTree& tree) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  mix(tree.size());
  mix(tree.n_observations());
  mix(tree.dimension());
  for (const TreeNode& node : tree.nodes()) {
    mix(node.scale);
    mix(node.index);
    mix(node.parent ? *node.parent + 1 : 0);
    mix(node.children.size());
    for (NodeId c : node.children) mix(c);
    mix(node.members.size());
    for (std::uint32_t m : node.members) mix(m);
  }
  return h;
}

void save_posterior(const PosteriorSamples& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  binio::write_magic(out, kPosteriorMagic);
  binio::write_u32(out, kPosteriorFormatVersion);
  binio::write_f64(out, s.hyper.alpha);
  binio::write_f64(out, s.hyper.a);
  binio::write_f64(out, s.hyper.b);
  binio::write_u64(out, s.hyper.max_iters);
  binio::write_u64(out, s.hyper.burn_in);
  binio::write_u64(out, s.seed);
  binio::write_u64(out, s.thin);
  binio::write_u64(out, s.iterations_run);
  binio::write_u64(out, s.n_observations);
  binio::write_u32(out, s.stopped_early ? 1 : 0);
  binio::write_f64(out, s.y_mean);
  binio::write_f64(out, s.y_sd);
  binio::write_u64(out, s.tree_fingerprint);
  binio::write_u64(out, s.n_nodes);
  binio::write_u64(out, s.n_draws());
  static_assert(sizeof(NodeParams) == 3 * sizeof(double));
  binio::write_f64_block(out, reinterpret_cast<const double*>(s.draws.data()), 3 * s.draws.size());
  binio::write_u64(out, s.loglik.size());
  binio::write_f64_block(out, s.loglik.data(), s.loglik.size());
  if (!out) throw DataError("write failed for " + path.string());
}

PosteriorSamples load_posterior(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string what = path.string();
  binio::expect_magic(in, kPosteriorMagic, what);
  const std::uint32_t version = binio::read_u32(in, what);
  if (version != kPosteriorFormatVersion)
    throw DataError(what + ": posterior format version " + std::to_string(version) +
                    " is not supported (expected " + std::to_string(kPosteriorFormatVersion) + ")");
  PosteriorSamples s;
  s.hyper.alpha = binio::read_f64(in, what);
  s.hyper.a = binio::read_f64(in, what);
  s.hyper.b = binio::read_f64(in, what);
  s.hyper.max_iters = binio::read_u64(in, what);
  s.hyper.burn_in = binio::read_u64(in, what);
  s.seed = binio::read_u64(in, what);
  s.thin = binio::read_u64(in, what);
  s.iterations_run = binio::read_u64(in, what);
  s.n_observations = binio::read_u64(in, what);
  s.stopped_early = binio::read_u32(in, what) != 0;
  s.y_mean = binio::read_f64(in, what);
  s.y_sd = binio::read_f64(in, what);
  s.tree_fingerprint = binio::read_u64(in, what);
  s.n_nodes = binio::read_u64(in, what);
  const std::uint64_t n_draws = binio::read_u64(in, what);
  if (s.n_nodes > (std::uint64_t{1} << 32) || n_draws > (std::uint64_t{1} << 32) ||
      (s.n_nodes > 0 && n_draws > (std::uint64_t{1} << 34) / s.n_nodes))
    throw DataError(what + ": implausible posterior dimensions");
  s.draws.resize(s.n_nodes * n_draws);
  binio::read_f64_block(in, reinterpret_cast<double*>(s.draws.data()), 3 * s.draws.size(), what);
  const std::uint64_t trace = binio::read_u64(in, what);
  if (trace > (std::uint64_t{1} << 34)) throw DataError(what + ": implausible trace length");
  s.loglik.resize(trace);
  binio::read_f64_block(in, s.loglik.data(), trace, what);
  if (!(s.y_sd > 0.0)) throw DataError(what + ": response scale must be positive");
  return s;
}

}  // namespace msb
