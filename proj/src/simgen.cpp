#include "msb/simgen.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <Eigen/QR>

#include "msb/error.hpp"

namespace msb {

namespace {

constexpr std::uint64_t kRowStream = 1;
constexpr std::uint64_t kPickStream = 2;
constexpr std::uint64_t kBasisStream = 3;
constexpr std::uint64_t kWeightStream = 4;

void check_dims(std::size_t n, std::size_t p) {
  if (n == 0) throw std::invalid_argument("n must be positive");
  if (p == 0) throw std::invalid_argument("p must be positive");
}

struct Component {
  Matrix basis;  // (p+1) x d
  std::vector<double> theta;
};

Component draw_component(std::size_t p, std::size_t d, double a_theta, double b_theta, std::uint64_t seed,
                         std::size_t g) {
  Rng rng = Rng::stream(seed, {kBasisStream, g});
  Component comp;
  comp.basis = sample_stiefel(p + 1, d, rng);
  comp.theta.resize(d);
  for (double& t : comp.theta) t = rng.inv_gamma(a_theta, b_theta);
  return comp;
}

Matrix loadings_of(const Component& comp) {
  Matrix omega = comp.basis;
  for (Eigen::Index k = 0; k < omega.cols(); ++k) omega.col(k) *= comp.theta[static_cast<std::size_t>(k)];
  return omega;
}

void subspace_row(const Component& comp, std::size_t p, std::size_t d, std::uint64_t seed, std::size_t i,
                  SimResult& out) {
  Rng rng = Rng::stream(seed, {kRowStream, i});
  std::vector<double> scaled(d);
  for (std::size_t k = 0; k < d; ++k) {
    const double eta = rng.normal();
    out.latent(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = eta;
    scaled[k] = comp.theta[k] * eta;
  }
  const auto ii = static_cast<Eigen::Index>(i);
  for (std::size_t r = 0; r <= p; ++r) {
    const auto rr = static_cast<Eigen::Index>(r);
    double z = 0.0;
    for (std::size_t k = 0; k < d; ++k) z += comp.basis(rr, static_cast<Eigen::Index>(k)) * scaled[k];
    z += rng.normal();
    if (r == 0)
      out.data.responses[ii] = z;
    else
      out.data.features(ii, rr - 1) = z;
  }
}

void check_subspace(std::size_t n, std::size_t p, std::size_t d, double a_theta, double b_theta) {
  check_dims(n, p);
  if (d == 0 || d > p + 1) throw std::invalid_argument("latent dimension d must lie in [1, p + 1]");
  if (!(a_theta > 0.0) || !(b_theta > 0.0)) throw std::invalid_argument("theta prior parameters must be positive");
}

}  // namespace

SimModel parse_sim_model(const std::string& name) {
  if (name == "nonlinear_mixture" || name == "mixture") return SimModel::nonlinear_mixture;
  if (name == "swissroll") return SimModel::swissroll;
  if (name == "linear_subspace" || name == "linear") return SimModel::linear_subspace;
  if (name == "union_subspaces" || name == "union") return SimModel::union_subspaces;
  throw std::invalid_argument("unknown model '" + name +
                              "' (expected nonlinear_mixture, swissroll, linear_subspace or union_subspaces)");
}

std::string to_string(SimModel model) {
  switch (model) {
    case SimModel::nonlinear_mixture: return "nonlinear_mixture";
    case SimModel::swissroll: return "swissroll";
    case SimModel::linear_subspace: return "linear_subspace";
    case SimModel::union_subspaces: return "union_subspaces";
  }
  return "unknown";
}

SwissrollParams swissroll_unit_sd() { return {}; }

SwissrollParams swissroll_linear_sd() {
  SwissrollParams params;
  params.sd_fn = [](double eta) { return eta + 1.0; };
  return params;
}

SwissrollParams swissroll_preset(const std::string& name) {
  if (name == "unit_sd") return swissroll_unit_sd();
  if (name == "linear_sd") return swissroll_linear_sd();
  throw std::invalid_argument("unknown swissroll preset '" + name + "' (expected unit_sd or linear_sd)");
}

SimResult simulate(const SimSpec& spec) {
  switch (spec.model) {
    case SimModel::nonlinear_mixture: return gen_nonlinear_mixture(spec.n, spec.p, spec.mixture, spec.seed);
    case SimModel::swissroll: return gen_swissroll(spec.n, spec.p, spec.swissroll, spec.seed);
    case SimModel::linear_subspace:
      return gen_linear_subspace(spec.n, spec.p, spec.subspace.d, spec.subspace.a_theta, spec.subspace.b_theta,
                                 spec.seed);
    case SimModel::union_subspaces:
      return gen_union_subspaces(spec.n, spec.p, spec.subspace.d, spec.subspace.groups, spec.subspace.a_theta,
                                 spec.subspace.b_theta, spec.subspace.dir_alpha, spec.seed);
  }
  throw std::invalid_argument("unknown simulation model");
}

SimResult gen_nonlinear_mixture(std::size_t n, std::size_t p, const MixtureParams& params, std::uint64_t seed) {
  check_dims(n, p);
  if (!(params.sigma1 > 0.0) || !(params.sigma2 > 0.0) || !(params.sigma_x > 0.0))
    throw std::invalid_argument("mixture standard deviations must be positive");
  if (!(params.c > 0.0)) throw std::invalid_argument("c must be positive");
  SimResult out;
  out.data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  out.data.responses.resize(static_cast<Eigen::Index>(n));
  out.latent.resize(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    Rng rng = Rng::stream(seed, {kRowStream, i});
    const double eta = std::sin(rng.uniform(0.0, params.c));
    out.latent(ii, 0) = eta;
    for (std::size_t r = 0; r < p; ++r) out.data.features(ii, static_cast<Eigen::Index>(r)) = rng.normal(eta, params.sigma_x);
    const bool first = rng.uniform() < std::abs(eta);
    out.data.responses[ii] = first ? rng.normal(params.mu1, params.sigma1) : rng.normal(params.mu2, params.sigma2);
  }
  return out;
}

std::vector<double> mixture_features_at(const MixtureParams& params, std::size_t p, double eta, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(p);
  for (double& v : x) v = rng.normal(eta, params.sigma_x);
  return x;
}

double mixture_conditional_density(const MixtureParams& params, double eta, double y) {
  auto pdf = [](double v, double mean, double sd) {
    const double z = (v - mean) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
  };
  const double w = std::abs(eta);
  return w * pdf(y, params.mu1, params.sigma1) + (1.0 - w) * pdf(y, params.mu2, params.sigma2);
}

SimResult gen_swissroll(std::size_t n, std::size_t p, const SwissrollParams& params, std::uint64_t seed) {
  check_dims(n, p);
  if (p < 3) throw std::invalid_argument("swissroll needs p >= 3");
  if (!params.mean_fn || !params.sd_fn) throw std::invalid_argument("swissroll mean and sd functions are required");
  SimResult out;
  out.data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  out.data.responses.resize(static_cast<Eigen::Index>(n));
  out.latent.resize(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    Rng rng = Rng::stream(seed, {kRowStream, i});
    const double eta = rng.uniform();
    out.latent(ii, 0) = eta;
    out.data.features(ii, 0) = eta * std::sin(eta);
    out.data.features(ii, 1) = eta * std::cos(eta);
    for (std::size_t r = 2; r < p; ++r) out.data.features(ii, static_cast<Eigen::Index>(r)) = rng.normal();
    const double sd = params.sd_fn(eta);
    if (!(sd > 0.0)) throw std::invalid_argument("swissroll sd function must be positive");
    out.data.responses[ii] = rng.normal(params.mean_fn(eta), sd);
  }
  return out;
}

Matrix sample_stiefel(std::size_t rows, std::size_t cols, Rng& rng) {
  if (cols == 0 || rows < cols) throw std::invalid_argument("Stiefel sample needs rows >= cols >= 1");
  Eigen::MatrixXd g(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index c = 0; c < g.cols(); ++c)
    for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
  const Eigen::MatrixXd& r = qr.matrixQR();
  for (Eigen::Index c = 0; c < q.cols(); ++c)
    if (r(c, c) < 0.0) q.col(c) = -q.col(c);
  return q;
}

SimResult gen_linear_subspace(std::size_t n, std::size_t p, std::size_t d, double a_theta, double b_theta,
                              std::uint64_t seed) {
  check_subspace(n, p, d, a_theta, b_theta);
  const Component comp = draw_component(p, d, a_theta, b_theta, seed, 0);
  SimResult out;
  out.loadings.push_back(loadings_of(comp));
  out.data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  out.data.responses.resize(static_cast<Eigen::Index>(n));
  out.latent.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) subspace_row(comp, p, d, seed, i, out);
  return out;
}

SimResult gen_union_subspaces(std::size_t n, std::size_t p, std::size_t d, std::size_t groups, double a_theta,
                              double b_theta, const std::vector<double>& dir_alpha, std::uint64_t seed) {
  check_subspace(n, p, d, a_theta, b_theta);
  if (groups == 0) throw std::invalid_argument("number of subspaces must be positive");
  std::vector<double> alpha = dir_alpha.empty() ? std::vector<double>(groups, 1.0) : dir_alpha;
  if (alpha.size() != groups) throw std::invalid_argument("Dirichlet parameter needs one entry per subspace");
  for (double a : alpha)
    if (!(a > 0.0)) throw std::invalid_argument("Dirichlet parameters must be positive");

  SimResult out;
  Rng wrng = Rng::stream(seed, {kWeightStream});
  out.weights.resize(groups);
  double total = 0.0;
  for (std::size_t g = 0; g < groups; ++g) total += out.weights[g] = wrng.gamma(alpha[g]);
  for (double& w : out.weights) w /= total;

  std::vector<Component> comps;
  for (std::size_t g = 0; g < groups; ++g) comps.push_back(draw_component(p, d, a_theta, b_theta, seed, g));
  for (const auto& c : comps) out.loadings.push_back(loadings_of(c));

  out.data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  out.data.responses.resize(static_cast<Eigen::Index>(n));
  out.latent.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  out.component.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = Rng::stream(seed, {kPickStream, i}).uniform();
    std::size_t g = 0;
    double cum = out.weights[0];
    while (g + 1 < groups && u >= cum) cum += out.weights[++g];
    out.component[i] = static_cast<std::uint32_t>(g);
    subspace_row(comps[g], p, d, seed, i, out);
  }
  return out;
}

void save_truth(const SimResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const Eigen::Index cols = result.latent.cols();
  out << "row";
  if (cols == 1) {
    out << ",eta";
  } else {
    for (Eigen::Index k = 0; k < cols; ++k) out << ",eta" << k + 1;
  }
  if (!result.component.empty()) out << ",component";
  out << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < result.latent.rows(); ++i) {
    out << i;
    for (Eigen::Index k = 0; k < cols; ++k) {
      const auto res = std::to_chars(buf, buf + sizeof buf, result.latent(i, k));
      out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    if (!result.component.empty()) out << ',' << result.component[static_cast<std::size_t>(i)];
    out << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace msb
