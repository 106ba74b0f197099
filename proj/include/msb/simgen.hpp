#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "msb/dataio.hpp"
#include "msb/rng.hpp"
#include "msb/types.hpp"

namespace msb {

enum class SimModel { nonlinear_mixture, swissroll, linear_subspace, union_subspaces };

SimModel parse_sim_model(const std::string& name);
std::string to_string(SimModel model);

// Generator sigmas are standard deviations.
struct MixtureParams {
  double mu1 = -2.0;
  double sigma1 = 1.0;
  double mu2 = 2.0;
  double sigma2 = 1.0;
  double sigma_x = 0.1;
  double c = 20.0;
};

struct SwissrollParams {
  std::function<double(double)> mean_fn = [](double eta) { return eta; };
  std::function<double(double)> sd_fn = [](double) { return 1.0; };
};

// mean eta, sd 1.
SwissrollParams swissroll_unit_sd();
// mean eta, sd eta + 1.
SwissrollParams swissroll_linear_sd();
// "unit_sd" or "linear_sd".
SwissrollParams swissroll_preset(const std::string& name);

struct SubspaceParams {
  std::size_t d = 5;
  double a_theta = 1.0;
  double b_theta = 0.25;
  std::size_t groups = 5;
  std::vector<double> dir_alpha;  // empty means all ones
};

struct SimSpec {
  SimModel model = SimModel::nonlinear_mixture;
  std::size_t n = 0;
  std::size_t p = 0;
  std::uint64_t seed = 0;
  MixtureParams mixture;
  SwissrollParams swissroll;
  SubspaceParams subspace;
};

/// Generated data plus the latent truth: eta per row (one column for models
/// with scalar eta, d columns for the subspace models) and component labels.
struct SimResult {
  Dataset data;
  Matrix latent;
  std::vector<std::uint32_t> component;  // union model only
  std::vector<double> weights;           // union model mixture weights
  std::vector<Matrix> loadings;          // subspace models: Omega = Gamma Theta, (p+1) x d
};

SimResult simulate(const SimSpec& spec);

SimResult gen_nonlinear_mixture(std::size_t n, std::size_t p, const MixtureParams& params, std::uint64_t seed);
SimResult gen_swissroll(std::size_t n, std::size_t p, const SwissrollParams& params, std::uint64_t seed);
SimResult gen_linear_subspace(std::size_t n, std::size_t p, std::size_t d, double a_theta, double b_theta,
                              std::uint64_t seed);
SimResult gen_union_subspaces(std::size_t n, std::size_t p, std::size_t d, std::size_t groups, double a_theta,
                              double b_theta, const std::vector<double>& dir_alpha, std::uint64_t seed);

/// Orthonormal columns from a QR factorization of a Gaussian matrix, with the
/// signs fixed so R has a positive diagonal.
Matrix sample_stiefel(std::size_t rows, std::size_t cols, Rng& rng);

// True f(y | eta) of the nonlinear mixture model.
double mixture_conditional_density(const MixtureParams& params, double eta, double y);

// Features of one nonlinear-mixture row at a fixed eta.
std::vector<double> mixture_features_at(const MixtureParams& params, std::size_t p, double eta, std::uint64_t seed);

// CSV with a header: row, latent columns, and component for the union model.
void save_truth(const SimResult& result, const std::filesystem::path& path);

}  // namespace msb
