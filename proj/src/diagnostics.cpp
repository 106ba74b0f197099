#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "msb/gibbs.hpp"

namespace msb {

namespace {

// Upper tail of the chi-square distribution with three degrees of freedom.
double chi2_3_survival(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(0.5 * x)) + std::sqrt(2.0 * x / std::numbers::pi) * std::exp(-0.5 * x);
}

}  // namespace

DiagnosticResult convergence_diagnostic(std::span<const double> trace, std::size_t batch, double level) {
  if (batch == 0) throw std::invalid_argument("batch size must be positive");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("diagnostic level must lie in (0, 1)");
  if (trace.size() < 20 * batch)
    throw std::invalid_argument("trace of length " + std::to_string(trace.size()) + " is shorter than 20 batches of " +
                                std::to_string(batch));
  DiagnosticResult result;
  const std::size_t m = trace.size() / batch;
  result.batches = m;
  std::vector<double> means(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t t = 0; t < batch; ++t) means[k] += trace[k * batch + t];
    means[k] /= static_cast<double>(batch);
  }
  double mean = 0.0;
  for (double v : means) mean += v;
  mean /= static_cast<double>(m);
  double var = 0.0;
  for (double v : means) var += (v - mean) * (v - mean);
  var /= static_cast<double>(m);
  if (!(var > 1e-300) || !std::isfinite(var)) {
    result.statistic = std::numeric_limits<double>::infinity();
    result.p_value = 0.0;
    return result;
  }
  const double sd = std::sqrt(var);
  double skew = 0.0, kurt = 0.0, lag = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double z = (means[k] - mean) / sd;
    skew += z * z * z;
    kurt += z * z * z * z;
    if (k + 1 < m) lag += z * (means[k + 1] - mean) / sd;
  }
  const double md = static_cast<double>(m);
  skew /= md;
  kurt /= md;
  const double r1 = lag / md;
  const double jb = md / 6.0 * (skew * skew + 0.25 * (kurt - 3.0) * (kurt - 3.0));
  result.statistic = jb + md * r1 * r1;
  result.p_value = chi2_3_survival(result.statistic);
  result.passed = result.p_value > level;
  return result;
}

}  // namespace msb
