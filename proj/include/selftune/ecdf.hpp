#pragma once

#include <functional>
#include <string>
#include <vector>

#include "selftune/rpca.hpp"

namespace selftune {

/// Kolmogorov-Smirnov distance sup_r |F_n(r) - cdf(r)| of a sample.
double ks_statistic(const Vector& sample, const std::function<double(double)>& cdf);

/// One maximum-likelihood single-penalty fit of a residual sample.
struct ResidualFit {
  /// "huberized_t", "l2" (Gaussian with fitted scale) or "l1" (Laplace with
  /// fitted scale, the scaled quantile(0.5) penalty).
  std::string family;
  /// huberized_t: (kappa, sigma); l2 and l1: the scale.
  Vector theta;
  double ks = 0.0;
  double neg_log_likelihood = 0.0;
  std::function<double(double)> cdf;
};

struct EcdfRow {
  double r = 0.0;
  double empirical = 0.0;
  std::vector<double> fitted;  ///< one value per fit, same order as `fits`
};

struct EcdfReport {
  /// Zero-variance sample: no fits are attempted and `rows` is empty.
  bool degenerate = false;
  std::string message;
  std::vector<ResidualFit> fits;  ///< sorted by KS distance, best first
  std::vector<EcdfRow> rows;

  const ResidualFit& best() const { return fits.front(); }
};

/// Empirical CDF of the residual sample with the three maximum-likelihood
/// fits. The huberized_t shape is fitted by damped Newton on the shape alone
/// (fit_shape_mle); the Gaussian and Laplace scales are closed form
/// (mean-zero models). `max_rows` thins the table to evenly spaced order
/// statistics (0 keeps every point).
EcdfReport residual_ecdf(const Vector& residuals, std::size_t max_rows = 0);

/// The same for R = Y - U'V of a separation result.
EcdfReport residual_ecdf(const SeparationResult& result, std::size_t max_rows = 0);

}  // namespace selftune
