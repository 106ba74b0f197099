#include "msb/evalbench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "msb/error.hpp"
#include "msb/predict.hpp"
#include "msb/rng.hpp"

namespace msb {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Eigen::MatrixXd orthonormal_basis(const Eigen::MatrixXd& m) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  return qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void mean_sd(std::span<const double> values, double& mean, double& sd) {
  mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
}

double knn_predict(const Matrix& whitened, const Vector& y, std::span<const std::size_t> rows,
                   std::span<const double> query, std::size_t k) {
  if (k == 0 || k > rows.size())
    throw std::invalid_argument("knn: k = " + std::to_string(k) + " must lie in [1, " + std::to_string(rows.size()) + "]");
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(rows.size());
  for (std::size_t r : rows) dist.emplace_back(squared_distance(row_span(whitened, r), query), r);
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) sum += y[static_cast<Eigen::Index>(dist[j].second)];
  return sum / static_cast<double>(k);
}

std::vector<std::size_t> all_but(std::size_t n, std::size_t skip) {
  std::vector<std::size_t> rows;
  rows.reserve(n - 1);
  for (std::size_t r = 0; r < n; ++r)
    if (r != skip) rows.push_back(r);
  return rows;
}

}  // namespace

Method parse_method(const std::string& name) {
  if (name == "msb") return Method::msb;
  if (name == "global_mean") return Method::global_mean;
  if (name == "knn") return Method::knn;
  if (name == "pc_ridge") return Method::pc_ridge;
  throw std::invalid_argument("unknown method '" + name + "' (expected msb, global_mean, knn or pc_ridge)");
}

std::string to_string(Method method) {
  switch (method) {
    case Method::msb: return "msb";
    case Method::global_mean: return "global_mean";
    case Method::knn: return "knn";
    case Method::pc_ridge: return "pc_ridge";
  }
  return "unknown";
}

LooMode parse_loo_mode(const std::string& name) {
  if (name == "exact") return LooMode::exact;
  if (name == "fast") return LooMode::fast;
  if (name == "auto") return LooMode::automatic;
  throw std::invalid_argument("unknown LOO mode '" + name + "' (expected exact, fast or auto)");
}

std::string to_string(LooMode mode) {
  switch (mode) {
    case LooMode::exact: return "exact";
    case LooMode::fast: return "fast";
    case LooMode::automatic: return "auto";
  }
  return "unknown";
}

double ratio_r(double phi_msb, double phi_other) {
  if (phi_other == 0.0) throw std::invalid_argument("ratio denominator is zero");
  return phi_msb / phi_other;
}

std::vector<double> PcaModel::scores(std::span<const double> raw) const {
  const auto x = apply_whitening(stats, raw);
  std::vector<double> t(static_cast<std::size_t>(loadings.cols()), 0.0);
  for (Eigen::Index c = 0; c < loadings.cols(); ++c)
    for (Eigen::Index r = 0; r < loadings.rows(); ++r) t[static_cast<std::size_t>(c)] += loadings(r, c) * x[static_cast<std::size_t>(r)];
  return t;
}

PcaModel fit_pca(const Matrix& features, std::size_t components, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(features.rows());
  const auto p = static_cast<std::size_t>(features.cols());
  if (components == 0 || components > std::min(n, p))
    throw std::invalid_argument("pc_ridge: " + std::to_string(components) + " components requested, at most " +
                                std::to_string(std::min(n, p)) + " available");
  PcaModel model;
  model.stats = fit_whitening(features);
  Matrix x = features;
  whiten_in_place(x, model.stats);

  const bool gram = n < p;
  const Eigen::MatrixXd a = gram ? Eigen::MatrixXd(x * x.transpose()) : Eigen::MatrixXd(x.transpose() * x);
  const Eigen::Index dim = a.rows();
  const auto m = static_cast<Eigen::Index>(components);

  Rng rng(seed);
  Eigen::MatrixXd q(dim, m);
  for (Eigen::Index c = 0; c < m; ++c)
    for (Eigen::Index r = 0; r < dim; ++r) q(r, c) = rng.normal();
  q = orthonormal_basis(q);
  for (int it = 0; it < 1000 && m < dim; ++it) {
    const Eigen::MatrixXd next = orthonormal_basis(a * q);
    const double drift = (next - q * (q.transpose() * next)).norm();
    q = next;
    if (drift < 1e-10) break;
  }
  const Eigen::MatrixXd small = q.transpose() * a * q;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(small);
  model.eigenvalues.resize(m);
  Eigen::MatrixXd u(dim, m);
  for (Eigen::Index c = 0; c < m; ++c) {
    const Eigen::Index src = m - 1 - c;  // ascending to descending
    model.eigenvalues[c] = eig.eigenvalues()[src];
    u.col(c) = q * eig.eigenvectors().col(src);
  }
  if (!gram) {
    model.loadings = u;
  } else {
    model.loadings = Matrix::Zero(static_cast<Eigen::Index>(p), m);
    const double floor = 1e-12 * std::max(1.0, model.eigenvalues[0]);
    for (Eigen::Index c = 0; c < m; ++c) {
      if (model.eigenvalues[c] <= floor) continue;
      model.loadings.col(c) = x.transpose() * u.col(c) / std::sqrt(model.eigenvalues[c]);
    }
  }
  model.eigenvalues /= static_cast<double>(n);
  return model;
}

Matrix pca_scores(const PcaModel& pca, const Matrix& features) {
  if (static_cast<std::size_t>(features.cols()) != pca.stats.size())
    throw std::invalid_argument("pc_ridge: feature dimension mismatch");
  Matrix x = features;
  whiten_in_place(x, pca.stats);
  return x * pca.loadings;
}

PcRidge fit_pc_ridge(const PcaModel& pca, const Matrix& scores, const Vector& responses,
                     std::span<const std::size_t> rows, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("ridge penalty must be non-negative");
  std::vector<std::size_t> chosen(rows.begin(), rows.end());
  if (chosen.empty()) {
    chosen.resize(static_cast<std::size_t>(scores.rows()));
    std::iota(chosen.begin(), chosen.end(), std::size_t{0});
  }
  const Eigen::Index m = scores.cols();
  const auto count = static_cast<Eigen::Index>(chosen.size());
  Eigen::MatrixXd t(count, m);
  Eigen::VectorXd y(count);
  for (Eigen::Index k = 0; k < count; ++k) {
    t.row(k) = scores.row(static_cast<Eigen::Index>(chosen[static_cast<std::size_t>(k)]));
    y[k] = responses[static_cast<Eigen::Index>(chosen[static_cast<std::size_t>(k)])];
  }
  const Eigen::RowVectorXd t_mean = t.colwise().mean();
  const double y_mean = y.mean();
  t.rowwise() -= t_mean;
  y.array() -= y_mean;
  Eigen::MatrixXd normal = t.transpose() * t;
  normal.diagonal().array() += lambda;
  PcRidge model;
  model.pca = pca;
  model.beta = normal.colPivHouseholderQr().solve(t.transpose() * y);
  model.intercept = y_mean - t_mean.dot(model.beta);
  return model;
}

double PcRidge::predict(std::span<const double> raw) const {
  const auto t = pca.scores(raw);
  double out = intercept;
  for (std::size_t c = 0; c < t.size(); ++c) out += beta[static_cast<Eigen::Index>(c)] * t[c];
  return out;
}

double baseline_predict(Method method, const Dataset& train, std::span<const double> x, const BaselineParams& params) {
  train.validate();
  if (train.n() == 0) throw std::invalid_argument("baseline needs training rows");
  if (x.size() != train.p()) throw std::invalid_argument("query dimension does not match the training data");
  switch (method) {
    case Method::global_mean: return train.responses.mean();
    case Method::knn: {
      const WhitenStats stats = fit_whitening(train.features);
      Matrix w = train.features;
      whiten_in_place(w, stats);
      std::vector<std::size_t> rows(train.n());
      std::iota(rows.begin(), rows.end(), std::size_t{0});
      return knn_predict(w, train.responses, rows, apply_whitening(stats, x), params.k);
    }
    case Method::pc_ridge: {
      const PcaModel pca = fit_pca(train.features, params.components, params.seed);
      return fit_pc_ridge(pca, pca_scores(pca, train.features), train.responses, {}, params.lambda).predict(x);
    }
    case Method::msb: break;
  }
  throw std::invalid_argument("baseline_predict does not handle msb");
}

EvalReport loo_evaluate(const Dataset& data, const EvalConfig& config) {
  data.validate();
  const std::size_t n = data.n();
  if (n < 3) throw std::invalid_argument("leave-one-out needs at least 3 rows");
  const auto wall_start = Clock::now();
  const std::clock_t cpu_start = std::clock();

  LooMode mode = config.mode;
  if (mode == LooMode::automatic) mode = n <= config.exact_limit ? LooMode::exact : LooMode::fast;
  if (config.method == Method::global_mean) mode = LooMode::exact;

  EvalReport report;
  report.method = to_string(config.method);
  report.mode = to_string(mode);
  report.n = n;
  report.predictions.assign(n, 0.0);
  report.squared_errors.assign(n, 0.0);
  report.fold_seconds.assign(n, 0.0);

  // Shared unsupervised stage for fast mode.
  GraphStage stage;
  PartitionTree tree;
  PcaModel pca;
  Matrix scores;
  WhitenStats knn_stats;
  Matrix knn_whitened;
  const auto shared_start = Clock::now();
  if (mode == LooMode::fast) {
    switch (config.method) {
      case Method::msb:
        stage = build_graph_stage(data.features, config.fit);
        tree = build_tree_stage(stage, config.fit);
        report.note = "fast mode: graph and tree built once on all rows, sampler refit per fold";
        break;
      case Method::pc_ridge:
        pca = fit_pca(data.features, config.baseline.components, config.baseline.seed);
        scores = pca_scores(pca, data.features);
        report.note = "fast mode: principal directions computed once on all rows, ridge refit per fold";
        break;
      case Method::knn:
        knn_stats = fit_whitening(data.features);
        knn_whitened = data.features;
        whiten_in_place(knn_whitened, knn_stats);
        report.note = "fast mode: feature whitening computed once on all rows";
        break;
      case Method::global_mean: break;
    }
  }
  report.shared_seconds = seconds_since(shared_start);

  auto fold = [&](std::size_t i) {
    const auto start = Clock::now();
    const auto x = row_span(data.features, i);
    double pred = 0.0;
    FitConfig fit = config.fit;
    fit.seed = derive_seed(config.fit.seed, {i});
    fit.threads = 1;
    if (mode == LooMode::exact) {
      const Dataset train = data.without_row(i);
      if (config.method == Method::msb) {
        const FitResult model = fit_model(train, fit);
        pred = point_predict(model.tree, model.posterior, x);
      } else {
        pred = baseline_predict(config.method, train, x, config.baseline);
      }
    } else {
      const auto rows = all_but(n, i);
      switch (config.method) {
        case Method::msb: {
          const PosteriorSamples post = fit_posterior(tree, data.responses, rows, fit);
          pred = path_point(post, tree.route_raw(x));
          break;
        }
        case Method::pc_ridge:
          pred = fit_pc_ridge(pca, scores, data.responses, rows, config.baseline.lambda).predict(x);
          break;
        case Method::knn:
          pred = knn_predict(knn_whitened, data.responses, rows, apply_whitening(knn_stats, x), config.baseline.k);
          break;
        case Method::global_mean: break;
      }
    }
    const double err = pred - data.responses[static_cast<Eigen::Index>(i)];
    report.predictions[i] = pred;
    report.squared_errors[i] = err * err;
    report.fold_seconds[i] = seconds_since(start);
  };

  const std::size_t workers = std::clamp<std::size_t>(config.threads, 1, n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fold(i);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t i = w; i < n; i += workers) fold(i);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  mean_sd(report.squared_errors, report.mse_mean, report.mse_sd);
  mean_sd(report.fold_seconds, report.time_mean, report.time_sd);
  report.cpu_time_seconds = static_cast<double>(std::clock() - cpu_start) / CLOCKS_PER_SEC;
  report.wall_seconds = seconds_since(wall_start);
  return report;
}

MatchedRatio matched_ratio(std::uint64_t seed, const EvalReport& msb, const EvalReport& other) {
  if (msb.n != other.n) throw std::invalid_argument("matched ratio needs reports on the same dataset");
  MatchedRatio r;
  r.seed = seed;
  r.mse_msb = msb.mse_mean;
  r.mse_other = other.mse_mean;
  r.r_mse = ratio_r(msb.mse_mean, other.mse_mean);
  r.time_msb = msb.wall_seconds;
  r.time_other = other.wall_seconds;
  r.r_time = other.wall_seconds > 0.0 ? ratio_r(msb.wall_seconds, other.wall_seconds) : 0.0;
  return r;
}

void write_report_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "replicate,seed,method,mode,n,mse_mean,mse_sd,time_mean,time_sd,shared_seconds,cpu_seconds,wall_seconds\n";
  for (const auto& r : reports)
    out << r.replicate << ',' << r.seed << ',' << r.method << ',' << r.mode << ',' << r.n << ',' << fmt(r.mse_mean) << ',' << fmt(r.mse_sd) << ','
        << fmt(r.time_mean) << ',' << fmt(r.time_sd) << ',' << fmt(r.shared_seconds) << ','
        << fmt(r.cpu_time_seconds) << ',' << fmt(r.wall_seconds) << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

void write_folds_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "replicate,method,row,prediction,squared_error,seconds\n";
  for (const auto& r : reports)
    for (std::size_t i = 0; i < r.n; ++i)
      out << r.replicate << ',' << r.method << ',' << i << ',' << fmt(r.predictions[i]) << ',' << fmt(r.squared_errors[i]) << ','
          << fmt(r.fold_seconds[i]) << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

void write_ratios_csv(const std::vector<MatchedRatio>& ratios, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "replicate,seed,mse_msb,mse_other,r_mse,time_msb,time_other,r_time\n";
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    const auto& r = ratios[k];
    out << k << ',' << r.seed << ',' << fmt(r.mse_msb) << ',' << fmt(r.mse_other) << ',' << fmt(r.r_mse) << ','
        << fmt(r.time_msb) << ',' << fmt(r.time_other) << ',' << fmt(r.r_time) << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

std::string format_summary(const std::vector<EvalReport>& reports, const std::string& header) {
  std::ostringstream out;
  out << header;
  if (!header.empty() && header.back() != '\n') out << '\n';
  out << std::left << std::setw(14) << "MODEL" << std::setw(28) << "MSE (S.D.)" << "TIME (S.D.)" << '\n';
  out << std::setprecision(4);
  for (const auto& r : reports) {
    std::ostringstream mse, time;
    mse << std::setprecision(4) << r.mse_mean << " (" << r.mse_sd << ")";
    time << std::setprecision(4) << r.time_mean << " (" << r.time_sd << ")";
    out << std::left << std::setw(14) << r.method << std::setw(28) << mse.str() << time.str() << '\n';
  }
  for (const auto& r : reports)
    if (!r.note.empty()) out << r.method << ": " << r.note << '\n';
  return out.str();
}

}  // namespace msb
