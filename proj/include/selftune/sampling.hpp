#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "selftune/penalty.hpp"

namespace selftune {

/// The density exp(-rho(r; theta)) / n_c(theta) with an exact inverse CDF.
///
/// Exactly-linear tails are inverted in closed form. The core between the
/// outermost breakpoints is tabulated at a fixed node set (cell masses by
/// adaptive Gauss-Kronrod) and inverted within a cell by safeguarded Newton
/// on the partial integral.
class ResidualDistribution {
 public:
  /// Throws DivergenceError when n_c(theta) is infinite.
  ResidualDistribution(PenaltyPtr penalty, Vector theta);

  double density(double r) const;
  double cdf(double r) const;
  double quantile(double u) const;
  double normalizer() const { return total_; }

 private:
  double core_partial(std::size_t cell, double r) const;
  double log_weight(double r) const;

  PenaltyPtr penalty_;
  Vector theta_;
  bool linear_tails_ = false;
  double left_slope_ = 0.0;
  double right_slope_ = 0.0;
  double left_mass_ = 0.0;
  double right_mass_ = 0.0;
  std::vector<double> nodes_;       ///< core cell boundaries
  std::vector<double> cumulative_;  ///< core mass up to nodes_[i]
  double total_ = 0.0;
};

/// m i.i.d. draws from exp(-rho)/n_c using draws 0..m-1 of stream `stream`.
Vector sample_residuals(const PenaltyPtr& penalty, const Vector& theta, int m,
                        std::uint64_t seed, std::uint64_t stream = 0);

struct SyntheticSpec {
  int m = 1000;
  int n = 50;
  std::string penalty = "quantile";
  Vector theta_true;
  std::uint64_t seed = 0;
  /// Trial index; selects disjoint counter streams under the same seed.
  std::uint64_t trial = 0;
  /// Supplied x_true; standard normal when empty.
  std::optional<Vector> x_true;

  /// Throws InputError unless m > n >= 1.
  void validate() const;
};

struct RegressionData {
  Matrix A;
  Vector x_true;
  Vector y;
  Vector residuals;
};

/// A iid standard normal, y = A x_true + residuals.
RegressionData generate_regression(const SyntheticSpec& spec);

}  // namespace selftune
