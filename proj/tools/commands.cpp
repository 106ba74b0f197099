#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msb/dataio.hpp"
#include "msb/error.hpp"
#include "msb/evalbench.hpp"
#include "msb/gibbs.hpp"
#include "msb/kgraph.hpp"
#include "msb/pipeline.hpp"
#include "msb/predict.hpp"
#include "msb/ptree.hpp"
#include "msb/rng.hpp"
#include "msb/simgen.hpp"

namespace fs = std::filesystem;

namespace msb::cli {

namespace {

constexpr const char* kVersion = "1.0.0";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string out;
};

struct DataArgs {
  std::string data;
  std::string responses;
};

struct GraphArgs {
  std::size_t target_degree = 20;
  std::string bandwidth = "auto";
  std::size_t max_pairs = 1'000'000;
};

struct TreeArgs {
  std::size_t min_leaf = 20;
  std::size_t max_depth = 8;
  double epsilon = 0.05;
};

struct GibbsArgs {
  double alpha = 1.0;
  double a = 3.0;
  double b = 1.0;
  std::size_t iters = 20000;
  std::size_t burn_in = 1000;
  std::size_t thin = 10;
  std::size_t max_draws = 2000;
  bool early_stop = false;
};

struct SimArgs {
  std::string model;
  std::size_t n = 0;
  std::size_t p = 0;
  double mu1 = -2.0, sigma1 = 1.0, mu2 = 2.0, sigma2 = 1.0, sigma_x = 0.1, c = 20.0;
  std::string swissroll = "unit_sd";
  std::size_t d = 5;
  double a_theta = 1.0;
  double b_theta = 0.25;
  std::size_t groups = 5;
  std::vector<double> dir_alpha;
};

void add_common(CLI::App* sub, Common& c, bool out_required) {
  sub->add_option("--config", c.config, "key=value file; command-line flags take precedence");
  sub->add_option("--seed", c.seed, "seed for every random stream");
  sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  auto* out = sub->add_option("--out", c.out, "output directory");
  if (out_required) out->required();
}

void add_data(CLI::App* sub, DataArgs& d) {
  sub->add_option("--data", d.data, "dataset (.csv: last column is y; otherwise binary)")->required();
  sub->add_option("--responses", d.responses, "separate one-column response file; --data then holds features only");
}

void add_graph(CLI::App* sub, GraphArgs& g) {
  sub->add_option("--target-degree", g.target_degree, "target average degree of the similarity graph")
      ->check(CLI::PositiveNumber);
  sub->add_option("--bandwidth", g.bandwidth, "kernel bandwidth: 'auto' (median squared distance) or a number");
  sub->add_option("--max-pairs", g.max_pairs, "pair budget for threshold selection")->check(CLI::PositiveNumber);
}

void add_tree(CLI::App* sub, TreeArgs& t) {
  sub->add_option("--min-leaf", t.min_leaf, "minimum leaf size")->check(CLI::Range(2, 1 << 30));
  sub->add_option("--max-depth", t.max_depth, "maximum tree scale")->check(CLI::PositiveNumber);
  sub->add_option("--epsilon", t.epsilon, "bisection balance tolerance")->check(CLI::Range(0.0, 0.5));
}

void add_gibbs(CLI::App* sub, GibbsArgs& g) {
  sub->add_option("--alpha", g.alpha, "stick-breaking concentration");
  sub->add_option("--a", g.a, "Inverse-Gamma shape");
  sub->add_option("--b", g.b, "Inverse-Gamma scale");
  sub->add_option("--iters", g.iters, "Gibbs iterations");
  sub->add_option("--burn-in", g.burn_in, "burn-in iterations");
  sub->add_option("--thin", g.thin, "thinning interval")->check(CLI::PositiveNumber);
  sub->add_option("--max-draws", g.max_draws, "cap on retained draws");
  sub->add_flag("--early-stop", g.early_stop, "stop once the convergence diagnostic passes");
}

void add_sim(CLI::App* sub, SimArgs& s, bool required) {
  auto* model = sub->add_option("--model", s.model, "nonlinear_mixture | swissroll | linear_subspace | union_subspaces");
  auto* n = sub->add_option("--n", s.n, "observations")->check(CLI::PositiveNumber);
  auto* p = sub->add_option("--p", s.p, "predictors")->check(CLI::PositiveNumber);
  if (required) {
    model->required();
    n->required();
    p->required();
  }
  sub->add_option("--mu1", s.mu1);
  sub->add_option("--sigma1", s.sigma1);
  sub->add_option("--mu2", s.mu2);
  sub->add_option("--sigma2", s.sigma2);
  sub->add_option("--sigma-x", s.sigma_x);
  sub->add_option("--c", s.c);
  sub->add_option("--swissroll", s.swissroll, "swissroll response: unit_sd (y ~ N(eta, 1)) or linear_sd (sd eta + 1)");
  sub->add_option("--d", s.d, "latent dimension");
  sub->add_option("--a-theta", s.a_theta);
  sub->add_option("--b-theta", s.b_theta);
  sub->add_option("--groups", s.groups, "number of subspaces");
  sub->add_option("--dir-alpha", s.dir_alpha, "Dirichlet parameters (comma separated)")->delimiter(',');
}

FitConfig fit_config(const Common& c, const GraphArgs& g, const TreeArgs& t, const GibbsArgs& gb) {
  FitConfig cfg;
  cfg.seed = c.seed;
  cfg.threads = c.threads;
  cfg.target_degree = g.target_degree;
  if (g.bandwidth != "auto") {
    double v = 0.0;
    const auto res = std::from_chars(g.bandwidth.data(), g.bandwidth.data() + g.bandwidth.size(), v);
    if (res.ec != std::errc() || res.ptr != g.bandwidth.data() + g.bandwidth.size() || !(v > 0.0))
      throw UsageError("--bandwidth must be 'auto' or a positive number, got '" + g.bandwidth + "'");
    cfg.bandwidth = v;
  }
  cfg.max_pairs = g.max_pairs;
  cfg.tree.min_leaf = t.min_leaf;
  cfg.tree.max_depth = t.max_depth;
  cfg.tree.epsilon = t.epsilon;
  cfg.hyper.alpha = gb.alpha;
  cfg.hyper.a = gb.a;
  cfg.hyper.b = gb.b;
  cfg.hyper.max_iters = gb.iters;
  cfg.hyper.burn_in = gb.burn_in;
  cfg.thin = gb.thin;
  cfg.max_draws = gb.max_draws;
  cfg.early_stop = gb.early_stop;
  cfg.hyper.validate();
  return cfg;
}

SimSpec sim_spec(const SimArgs& s, std::uint64_t seed) {
  SimSpec spec;
  spec.model = parse_sim_model(s.model);
  spec.n = s.n;
  spec.p = s.p;
  spec.seed = seed;
  spec.mixture = {s.mu1, s.sigma1, s.mu2, s.sigma2, s.sigma_x, s.c};
  spec.swissroll = swissroll_preset(s.swissroll);
  spec.subspace.d = s.d;
  spec.subspace.a_theta = s.a_theta;
  spec.subspace.b_theta = s.b_theta;
  spec.subspace.groups = s.groups;
  spec.subspace.dir_alpha = s.dir_alpha;
  return spec;
}

Dataset load_data(const DataArgs& d) {
  const Format fmt = format_for_path(d.data);
  Dataset data = d.responses.empty() ? load_dataset(d.data, fmt) : load_dataset(d.data, d.responses, fmt);
  data.validate();
  return data;
}

fs::path prepare_out(const std::string& dir) {
  fs::path out(dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
  return out;
}

// Every option of the subcommand with its resolved value; re-running with
// `--config manifest.txt` reproduces the run.
void write_manifest(const CLI::App* sub, const fs::path& dir) {
  std::ofstream out(dir / "manifest.txt");
  if (!out) throw DataError("cannot write " + (dir / "manifest.txt").string());
  out << "# msb " << kVersion << ' ' << sub->get_name() << '\n';
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config" || name.empty()) continue;
    std::string value;
    if (opt->get_expected_max() == 0) {
      value = opt->count() > 0 && opt->as<bool>() ? "true" : "false";
    } else if (opt->count() > 0) {
      const auto& results = opt->results();
      for (std::size_t k = 0; k < results.size(); ++k) value += (k ? "," : "") + results[k];
    } else {
      value = opt->get_default_str();
      if (value == "{}" || value == "[]") value.clear();
    }
    if (value.empty()) continue;
    out << name << '=' << value << '\n';
  }
  if (!out) throw DataError("write failed for manifest");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

std::string graph_summary(const GraphStage& stage) {
  std::ostringstream s;
  s << "n_vertices=" << stage.summary.n_vertices << '\n'
    << "n_edges=" << stage.graph.n_edges() << '\n'
    << "edges_before_attach=" << stage.summary.n_edges << '\n'
    << "average_degree=" << num(2.0 * static_cast<double>(stage.graph.n_edges()) /
                                  static_cast<double>(std::max<std::size_t>(1, stage.summary.n_vertices)))
    << '\n'
    << "isolated_attached=" << stage.summary.isolated.size() << '\n'
    << "threshold=" << num(stage.kernel.threshold) << '\n'
    << "bandwidth=" << num(stage.kernel.bandwidth) << '\n'
    << "pairs_used=" << stage.kernel.pairs_used << '\n'
    << "subsampled=" << (stage.kernel.subsampled ? "true" : "false") << '\n';
  return s.str();
}

std::string tree_summary(const PartitionTree& tree) {
  std::ostringstream s;
  s << "nodes=" << tree.size() << '\n' << "depth=" << tree.depth() << '\n' << "leaves=" << tree.leaves().size() << '\n';
  for (std::uint32_t j = 0; j <= tree.depth(); ++j) {
    const auto ids = tree.scale_nodes(j);
    std::size_t leaves = 0, smallest = tree.n_observations(), largest = 0;
    for (NodeId id : ids) {
      const auto& node = tree.node(id);
      leaves += node.is_leaf() ? 1 : 0;
      smallest = std::min(smallest, node.members.size());
      largest = std::max(largest, node.members.size());
    }
    s << "scale_" << j << "=cells:" << ids.size() << " leaves:" << leaves << " min_size:" << smallest
      << " max_size:" << largest << '\n';
  }
  return s.str();
}

std::string posterior_summary(const PosteriorSamples& post, const GibbsOptions& gopts) {
  std::ostringstream s;
  s << "iterations_run=" << post.iterations_run << '\n'
    << "burn_in=" << post.hyper.burn_in << '\n'
    << "thin=" << post.thin << '\n'
    << "draws=" << post.n_draws() << '\n'
    << "stopped_early=" << (post.stopped_early ? "true" : "false") << '\n';
  const std::size_t after = post.iterations_run > post.hyper.burn_in ? post.iterations_run - post.hyper.burn_in : 0;
  if (after >= 20 * gopts.diag_batch) {
    const auto diag = convergence_diagnostic(
        std::span<const double>(post.loglik.data() + post.hyper.burn_in, after), gopts.diag_batch, gopts.diag_level);
    s << "diagnostic_statistic=" << num(diag.statistic) << '\n'
      << "diagnostic_p_value=" << num(diag.p_value) << '\n'
      << "diagnostic_passed=" << (diag.passed ? "true" : "false") << '\n';
  } else {
    s << "diagnostic=skipped (fewer than " << 20 * gopts.diag_batch << " post-burn-in iterations)\n";
  }
  return s.str();
}

int cmd_simulate(const CLI::App* sub, const Common& c, const SimArgs& s, const std::string& format) {
  const SimResult result = simulate(sim_spec(s, c.seed));
  const fs::path dir = prepare_out(c.out);
  if (format != "bin" && format != "csv") throw UsageError("--format must be bin or csv");
  const Format fmt = format == "csv" ? Format::csv : Format::bin;
  save_dataset(result.data, dir / (format == "csv" ? "data.csv" : "data.bin"), fmt);
  save_truth(result, dir / "truth.csv");
  write_manifest(sub, dir);
  std::cout << "wrote " << result.data.n() << " x " << result.data.p() << " " << s.model << " dataset to "
            << dir.string() << '\n';
  return 0;
}

int cmd_build_graph(const CLI::App* sub, const Common& c, const DataArgs& d, const GraphArgs& g) {
  const Dataset data = load_data(d);
  const FitConfig cfg = fit_config(c, g, TreeArgs{}, GibbsArgs{});
  const GraphStage stage = build_graph_stage(data.features, cfg);
  const fs::path dir = prepare_out(c.out);
  save_edge_list(stage.graph, dir / "graph.txt");
  write_text(dir / "graph_summary.txt", graph_summary(stage));
  write_manifest(sub, dir);
  std::cout << graph_summary(stage) << "graph_seconds=" << num(stage.seconds) << '\n';
  return 0;
}

int cmd_build_tree(const CLI::App* sub, const Common& c, const DataArgs& d, const GraphArgs& g, const TreeArgs& t,
                   const std::string& graph_path) {
  const Dataset data = load_data(d);
  const FitConfig cfg = fit_config(c, g, t, GibbsArgs{});
  GraphStage stage;
  if (graph_path.empty()) {
    stage = build_graph_stage(data.features, cfg);
  } else {
    stage.x_stats = fit_whitening(data.features);
    stage.whitened = data.features;
    whiten_in_place(stage.whitened, stage.x_stats);
    stage.graph = load_edge_list(graph_path);
    if (stage.graph.n_vertices() != data.n())
      throw DataError(graph_path + ": graph has " + std::to_string(stage.graph.n_vertices()) +
                      " vertices but the dataset has " + std::to_string(data.n()) + " rows");
  }
  const PartitionTree tree = build_tree_stage(stage, cfg);
  const fs::path dir = prepare_out(c.out);
  if (graph_path.empty()) save_edge_list(stage.graph, dir / "graph.txt");
  save_tree(tree, dir / "tree.msbt");
  write_text(dir / "tree_summary.txt", tree_summary(tree));
  write_manifest(sub, dir);
  std::cout << tree_summary(tree);
  return 0;
}

int cmd_fit(const CLI::App* sub, const Common& c, const DataArgs& d, const GraphArgs& g, const TreeArgs& t,
            const GibbsArgs& gb) {
  const Dataset data = load_data(d);
  const FitConfig cfg = fit_config(c, g, t, gb);
  const FitResult fit = fit_model(data, cfg);
  const fs::path dir = prepare_out(c.out);
  save_edge_list(fit.graph.graph, dir / "graph.txt");
  save_tree(fit.tree, dir / "tree.msbt");
  save_posterior(fit.posterior, dir / "posterior.msbp");
  std::ostringstream summary;
  summary << "n=" << data.n() << "\np=" << data.p() << '\n'
          << graph_summary(fit.graph) << tree_summary(fit.tree) << posterior_summary(fit.posterior, gibbs_options(cfg));
  write_text(dir / "fit_summary.txt", summary.str());
  write_manifest(sub, dir);
  std::cout << summary.str() << "graph_seconds=" << num(fit.graph.seconds) << "\ntree_seconds=" << num(fit.tree_seconds)
            << "\ngibbs_seconds=" << num(fit.gibbs_seconds) << '\n';
  return 0;
}

struct PredictArgs {
  std::string tree;
  std::string posterior;
  std::string query;
  std::size_t grid_points = 512;
  double grid_width = 6.0;
  std::vector<double> grid_range;
  std::size_t densities = 0;
};

int cmd_predict(const CLI::App* sub, const Common& c, const PredictArgs& a) {
  const PartitionTree tree = load_tree(a.tree);
  const PosteriorSamples post = load_posterior(a.posterior);
  check_compatible(tree, post);
  Matrix query = load_matrix(a.query, format_for_path(a.query));
  if (static_cast<std::size_t>(query.cols()) == tree.dimension() + 1) query.conservativeResize(Eigen::NoChange, query.cols() - 1);
  if (static_cast<std::size_t>(query.cols()) != tree.dimension())
    throw DataError(a.query + ": query has " + std::to_string(query.cols()) + " columns, the model expects " +
                    std::to_string(tree.dimension()));

  std::vector<double> grid;
  if (!a.grid_range.empty()) {
    if (a.grid_range.size() != 2 || !(a.grid_range[1] > a.grid_range[0]))
      throw UsageError("--grid-range needs two increasing values lo,hi");
    if (a.grid_points < 2) throw UsageError("--grid-points must be at least 2");
    grid.resize(a.grid_points);
    const double step = (a.grid_range[1] - a.grid_range[0]) / static_cast<double>(a.grid_points - 1);
    for (std::size_t g = 0; g < a.grid_points; ++g) grid[g] = a.grid_range[0] + step * static_cast<double>(g);
  } else {
    grid = default_grid(post, a.grid_points, a.grid_width);
  }

  const fs::path dir = prepare_out(c.out);
  std::ofstream preds(dir / "predictions.csv");
  if (!preds) throw DataError("cannot write predictions.csv");
  preds << "row,prediction\n";
  const std::size_t rows = static_cast<std::size_t>(query.rows());
  const std::size_t with_density = a.densities == 0 ? rows : std::min(rows, a.densities);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto x = row_span(query, i);
    if (i < with_density) {
      const DensityEstimate est = predictive_density(tree, post, x, grid);
      std::ofstream out(dir / ("density_" + std::to_string(i) + ".csv"));
      if (!out) throw DataError("cannot write density file");
      out << "y,p2.5,p50,p97.5\n";
      for (std::size_t g = 0; g < grid.size(); ++g)
        out << num(est.y_grid[g]) << ',' << num(est.p025[g]) << ',' << num(est.p50[g]) << ',' << num(est.p975[g]) << '\n';
      preds << i << ',' << num(est.point_mean) << '\n';
    } else {
      preds << i << ',' << num(point_predict(tree, post, x)) << '\n';
    }
  }
  if (!preds) throw DataError("write failed for predictions.csv");
  write_manifest(sub, dir);
  std::cout << "predicted " << rows << " queries (" << with_density << " density curves on " << grid.size()
            << " grid points) into " << dir.string() << '\n';
  return 0;
}

struct EvalArgs {
  std::string data;
  std::size_t replicates = 1;
  std::string baseline = "global_mean";
  std::string loo_mode = "auto";
  std::size_t exact_limit = 200;
  std::size_t knn_k = 5;
  std::size_t components = 5;
  double lambda = 1.0;
};

EvalReport pooled(const std::vector<EvalReport>& reports, const std::string& method) {
  EvalReport out;
  out.method = method;
  for (const auto& r : reports) {
    if (r.method != method) continue;
    out.mode = r.mode;
    out.note = r.note;
    out.squared_errors.insert(out.squared_errors.end(), r.squared_errors.begin(), r.squared_errors.end());
    out.fold_seconds.insert(out.fold_seconds.end(), r.fold_seconds.begin(), r.fold_seconds.end());
  }
  auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(std::max<std::size_t>(1, v.size()));
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  };
  stats(out.squared_errors, out.mse_mean, out.mse_sd);
  stats(out.fold_seconds, out.time_mean, out.time_sd);
  return out;
}

int cmd_eval(const CLI::App* sub, const Common& c, const EvalArgs& e, const SimArgs& s, const GraphArgs& g,
             const TreeArgs& t, const GibbsArgs& gb) {
  if (e.data.empty() && (s.model.empty() || s.n == 0 || s.p == 0))
    throw UsageError("eval needs --data or a simulation setup (--model, --n, --p)");
  if (e.replicates == 0) throw UsageError("--replicates must be positive");
  const Method baseline = parse_method(e.baseline);
  if (baseline == Method::msb) throw UsageError("--baseline must be global_mean, knn or pc_ridge");

  EvalConfig msb_cfg;
  msb_cfg.method = Method::msb;
  msb_cfg.mode = parse_loo_mode(e.loo_mode);
  msb_cfg.exact_limit = e.exact_limit;
  msb_cfg.fit = fit_config(c, g, t, gb);
  msb_cfg.threads = c.threads;
  msb_cfg.baseline = {e.knn_k, e.components, e.lambda, c.seed};
  EvalConfig base_cfg = msb_cfg;
  base_cfg.method = baseline;

  std::vector<EvalReport> reports;
  std::vector<MatchedRatio> ratios;
  const std::size_t reps = e.data.empty() ? e.replicates : 1;
  for (std::size_t r = 0; r < reps; ++r) {
    const std::uint64_t seed = e.data.empty() ? derive_seed(c.seed, {r}) : c.seed;
    Dataset data;
    if (e.data.empty()) {
      data = simulate(sim_spec(s, seed)).data;
    } else {
      DataArgs d;
      d.data = e.data;
      data = load_data(d);
    }
    msb_cfg.fit.seed = seed;
    base_cfg.baseline.seed = seed;
    EvalReport m = loo_evaluate(data, msb_cfg);
    EvalReport b = loo_evaluate(data, base_cfg);
    m.replicate = b.replicate = r;
    m.seed = b.seed = seed;
    ratios.push_back(matched_ratio(seed, m, b));
    std::cerr << "replicate " << r << ": mse msb " << num(m.mse_mean) << ", " << e.baseline << ' ' << num(b.mse_mean)
              << ", r_mse " << num(ratios.back().r_mse) << '\n';
    reports.push_back(std::move(m));
    reports.push_back(std::move(b));
  }

  const fs::path dir = prepare_out(c.out);
  write_report_csv(reports, dir / "report.csv");
  write_folds_csv(reports, dir / "folds.csv");
  write_ratios_csv(ratios, dir / "ratios.csv");
  std::ostringstream header;
  header << "baseline: " << e.baseline
         << " (in-repo baseline standing in for external competitor methods, which are not run)\n"
         << "replicates: " << reps << '\n'
         << "loo mode: " << reports.front().mode << '\n';
  std::size_t wins = 0;
  for (const auto& r : ratios) wins += r.r_mse < 1.0 ? 1 : 0;
  std::ostringstream text;
  text << format_summary({pooled(reports, "msb"), pooled(reports, e.baseline)}, header.str())
       << "r_mse < 1 in " << wins << " of " << ratios.size() << " replicates\n";
  write_text(dir / "summary.txt", text.str());
  write_manifest(sub, dir);
  std::cout << text.str();
  return 0;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cmd_report(const std::string& dir_name) {
  const fs::path dir(dir_name);
  if (!fs::is_directory(dir)) throw DataError(dir_name + " is not a directory");
  bool any = false;
  for (const char* name : {"summary.txt", "fit_summary.txt", "tree_summary.txt", "graph_summary.txt"}) {
    if (!fs::exists(dir / name)) continue;
    any = true;
    std::cout << "== " << name << '\n' << read_file(dir / name);
  }
  if (fs::exists(dir / "ratios.csv")) {
    any = true;
    std::ifstream in(dir / "ratios.csv");
    std::string line;
    std::getline(in, line);
    std::vector<double> r;
    while (std::getline(in, line)) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (cells.size() < 5) throw DataError("malformed ratios.csv line: " + line);
      double v = 0.0;
      std::from_chars(cells[4].data(), cells[4].data() + cells[4].size(), v);
      r.push_back(v);
    }
    if (!r.empty()) {
      std::vector<double> sorted = r;
      std::sort(sorted.begin(), sorted.end());
      const auto below = std::count_if(r.begin(), r.end(), [](double v) { return v < 1.0; });
      std::cout << "== r_mse distribution over " << r.size() << " replicates\n"
                << "min=" << num(sorted.front()) << " median=" << num(sorted[sorted.size() / 2])
                << " max=" << num(sorted.back()) << " below_one=" << below << '\n';
    }
  }
  if (!any) throw DataError(dir_name + " holds no msb outputs");
  return 0;
}

std::vector<std::string> read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::vector<std::string> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    entries.push_back(trim(line.substr(0, eq)) + "=" + trim(line.substr(eq + 1)));
  }
  return entries;
}

// Splices config-file entries in as --key=value unless the flag is already given.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string config;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) config = args[k + 1];
    if (args[k].rfind("--config=", 0) == 0) config = args[k].substr(9);
  }
  if (config.empty() || args.empty()) return args;
  std::vector<std::string> extra;
  for (const auto& entry : read_config(config)) {
    const std::string key = entry.substr(0, entry.find('='));
    if (key == "config") continue;
    const std::string flag = "--" + key;
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (!given) extra.push_back("--" + entry);
  }
  args.insert(args.begin() + 1, extra.begin(), extra.end());
  return args;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Multiscale stick-breaking conditional density estimation", "msb"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  Common common;
  DataArgs data;
  GraphArgs graph;
  TreeArgs tree;
  GibbsArgs gibbs;
  SimArgs sim;
  PredictArgs pred;
  EvalArgs eval;
  std::string format = "bin";
  std::string graph_path;
  std::string report_dir;

  auto* simulate_cmd = app.add_subcommand("simulate", "generate a synthetic dataset");
  add_common(simulate_cmd, common, true);
  add_sim(simulate_cmd, sim, true);
  simulate_cmd->add_option("--format", format, "bin or csv");

  auto* graph_cmd = app.add_subcommand("build-graph", "whiten features and build the similarity graph");
  add_common(graph_cmd, common, true);
  add_data(graph_cmd, data);
  add_graph(graph_cmd, graph);

  auto* tree_cmd = app.add_subcommand("build-tree", "build the partition tree");
  add_common(tree_cmd, common, true);
  add_data(tree_cmd, data);
  add_graph(tree_cmd, graph);
  add_tree(tree_cmd, tree);
  tree_cmd->add_option("--graph", graph_path, "existing edge list; built from the data when omitted");

  auto* fit_cmd = app.add_subcommand("fit", "graph, tree and Gibbs sampler in one run");
  add_common(fit_cmd, common, true);
  add_data(fit_cmd, data);
  add_graph(fit_cmd, graph);
  add_tree(fit_cmd, tree);
  add_gibbs(fit_cmd, gibbs);

  auto* predict_cmd = app.add_subcommand("predict", "predictive densities and point predictions");
  add_common(predict_cmd, common, true);
  predict_cmd->add_option("--tree", pred.tree, "tree file from build-tree or fit")->required();
  predict_cmd->add_option("--posterior", pred.posterior, "posterior file from fit")->required();
  predict_cmd->add_option("--query", pred.query, "query features (csv or binary)")->required();
  predict_cmd->add_option("--grid-points", pred.grid_points, "density grid size");
  predict_cmd->add_option("--grid-width", pred.grid_width, "grid half-width in training response sds");
  predict_cmd->add_option("--grid-range", pred.grid_range, "explicit grid bounds lo,hi")->delimiter(',');
  predict_cmd->add_option("--densities", pred.densities, "write density curves for the first N queries (0 = all)");

  auto* eval_cmd = app.add_subcommand("eval", "leave-one-out evaluation against a baseline");
  add_common(eval_cmd, common, true);
  add_sim(eval_cmd, sim, false);
  add_graph(eval_cmd, graph);
  add_tree(eval_cmd, tree);
  add_gibbs(eval_cmd, gibbs);
  eval_cmd->add_option("--data", eval.data, "dataset to evaluate instead of simulating");
  eval_cmd->add_option("--replicates", eval.replicates, "simulated replicates with derived seeds");
  eval_cmd->add_option("--baseline", eval.baseline, "global_mean, knn or pc_ridge");
  eval_cmd->add_option("--loo-mode", eval.loo_mode, "exact, fast or auto");
  eval_cmd->add_option("--exact-limit", eval.exact_limit, "auto mode runs exact LOO up to this n");
  eval_cmd->add_option("--knn-k", eval.knn_k);
  eval_cmd->add_option("--components", eval.components, "principal components for pc_ridge");
  eval_cmd->add_option("--lambda", eval.lambda, "ridge penalty for pc_ridge");

  auto* report_cmd = app.add_subcommand("report", "summarize an output directory");
  report_cmd->add_option("--dir", report_dir, "output directory of a previous command")->required();

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (simulate_cmd->parsed()) return cmd_simulate(simulate_cmd, common, sim, format);
    if (graph_cmd->parsed()) return cmd_build_graph(graph_cmd, common, data, graph);
    if (tree_cmd->parsed()) return cmd_build_tree(tree_cmd, common, data, graph, tree, graph_path);
    if (fit_cmd->parsed()) return cmd_fit(fit_cmd, common, data, graph, tree, gibbs);
    if (predict_cmd->parsed()) return cmd_predict(predict_cmd, common, pred);
    if (eval_cmd->parsed()) return cmd_eval(eval_cmd, common, eval, sim, graph, tree, gibbs);
    if (report_cmd->parsed()) return cmd_report(report_dir);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace msb::cli
