#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "msb/dataio.hpp"
#include "msb/pipeline.hpp"

namespace msb {

enum class Method { msb, global_mean, knn, pc_ridge };
enum class LooMode { exact, fast, automatic };

Method parse_method(const std::string& name);
std::string to_string(Method method);
LooMode parse_loo_mode(const std::string& name);
std::string to_string(LooMode mode);

// phi_msb / phi_other.
double ratio_r(double phi_msb, double phi_other);

struct BaselineParams {
  std::size_t k = 5;            // neighbours for knn
  std::size_t components = 5;   // principal components for pc_ridge
  double lambda = 1.0;          // ridge penalty
  std::uint64_t seed = 0;       // power-iteration start
};

/// Leading principal directions of whitened features by block power iteration.
struct PcaModel {
  WhitenStats stats;
  Matrix loadings;  // p x m, orthonormal columns
  Vector eigenvalues;  // score variances, descending

  std::vector<double> scores(std::span<const double> raw) const;
};

PcaModel fit_pca(const Matrix& features, std::size_t components, std::uint64_t seed);

/// Ridge regression on principal-component scores with an unpenalized intercept.
struct PcRidge {
  PcaModel pca;
  double intercept = 0.0;
  Vector beta;

  double predict(std::span<const double> raw) const;
};

// Score matrix (n x m) of raw feature rows.
Matrix pca_scores(const PcaModel& pca, const Matrix& features);

// Fits on the selected rows of a precomputed score matrix (all rows when `rows` is empty).
PcRidge fit_pc_ridge(const PcaModel& pca, const Matrix& scores, const Vector& responses,
                     std::span<const std::size_t> rows, double lambda);

double baseline_predict(Method method, const Dataset& train, std::span<const double> x, const BaselineParams& params);

struct EvalConfig {
  Method method = Method::msb;
  LooMode mode = LooMode::automatic;
  std::size_t exact_limit = 200;  // automatic mode: exact iff n <= exact_limit
  FitConfig fit;
  BaselineParams baseline;
  std::size_t threads = 1;        // concurrent folds
};

struct EvalReport {
  std::size_t replicate = 0;
  std::uint64_t seed = 0;  // dataset seed, for matching reports across methods
  std::string method;
  std::string mode;
  std::size_t n = 0;
  std::vector<double> predictions;
  std::vector<double> squared_errors;
  std::vector<double> fold_seconds;
  double shared_seconds = 0.0;  // fast mode: one-off unsupervised stage
  double mse_mean = 0.0;
  double mse_sd = 0.0;
  double time_mean = 0.0;
  double time_sd = 0.0;
  double cpu_time_seconds = 0.0;
  double wall_seconds = 0.0;
  std::string note;
};

/// Leave-one-out evaluation. Exact mode refits everything per fold. Fast mode
/// reuses the unsupervised stage (graph and tree for msb, principal directions
/// for pc_ridge) built once on all rows and refits the rest per fold.
EvalReport loo_evaluate(const Dataset& data, const EvalConfig& config);

struct MatchedRatio {
  std::uint64_t seed = 0;
  double mse_msb = 0.0;
  double mse_other = 0.0;
  double r_mse = 0.0;
  double time_msb = 0.0;
  double time_other = 0.0;
  double r_time = 0.0;
};

// Both reports must come from the same dataset.
MatchedRatio matched_ratio(std::uint64_t seed, const EvalReport& msb, const EvalReport& other);

void write_report_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path);
void write_folds_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path);
void write_ratios_csv(const std::vector<MatchedRatio>& ratios, const std::filesystem::path& path);
// MODEL / MSE (S.D.) / TIME (S.D.) table, preceded by `header` lines.
std::string format_summary(const std::vector<EvalReport>& reports, const std::string& header);

}  // namespace msb
