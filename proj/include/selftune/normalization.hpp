#pragma once

#include <string_view>

#include "selftune/penalty.hpp"

namespace selftune {

enum class NormalizationMode { closed_form, quadrature };

/// log n_c(theta) with its gradient and Hessian.
struct LogNcDerivatives {
  double value = 0.0;
  Vector gradient;
  Matrix hessian;
};

/// n_c(theta) = int exp(-rho(r; theta)) dr and its theta-derivatives, obtained
/// by integrating the differentiated integrand.
struct NcIntegrals {
  double value = 0.0;
  double error = 0.0;
  Vector gradient;
  Matrix hessian;
};

/// Quadrature realization of n_c: the core is split at the penalty
/// breakpoints and integrated by adaptive Gauss-Kronrod; exactly-linear tails
/// are integrated in closed form (Gauss-Laguerre rules that are exact for
/// exp(-linear) times a low-degree polynomial). `order` selects how many
/// derivatives to integrate (0, 1 or 2). The Hessian is only valid when
/// grad_theta rho is continuous in r; for vapnik it jumps at |r| = epsilon and
/// the differentiated integrand misses the boundary term.
///
/// Throws DivergenceError outside the domain or for non-integrable families
/// and ToleranceError (carrying the best estimate) when the panel budget runs
/// out.
NcIntegrals integrate_nc(const Penalty& penalty, const Vector& theta,
                         int order, double tol = 1e-10, int max_panels = 10000);

struct NcQuadrature {
  double value;
  double error_estimate;
};

NcQuadrature quadrature_nc(const Penalty& penalty, const Vector& theta,
                           double tol = 1e-10);

/// Evaluator for log n_c(theta) and its derivatives.
class NormalizationModel {
 public:
  /// Closed form when one is known for the family, quadrature otherwise.
  explicit NormalizationModel(PenaltyPtr penalty, double tol = 1e-10);
  NormalizationModel(PenaltyPtr penalty, NormalizationMode mode,
                     double tol = 1e-10);

  static bool has_closed_form(std::string_view key);

  NormalizationMode mode() const { return mode_; }
  const Penalty& penalty() const { return *penalty_; }
  const PenaltyPtr& penalty_ptr() const { return penalty_; }
  double tolerance() const { return tol_; }

  double log_nc(const Vector& theta) const;
  Vector grad_log_nc(const Vector& theta) const;
  Matrix hess_log_nc(const Vector& theta) const;
  LogNcDerivatives evaluate(const Vector& theta, int order = 2) const;

 private:
  LogNcDerivatives closed_form(const Vector& theta, int order) const;

  PenaltyPtr penalty_;
  NormalizationMode mode_;
  double tol_;
};

/// Maximum-likelihood shape for fixed residuals: minimizes
/// sum_i rho(r_i; theta) + m log n_c(theta) over D by damped Newton with an
/// absolute-eigenvalue Hessian, backtracking and steps kept inside D. Stops at
/// the first non-improving step or after max_iter steps.
Vector fit_shape_mle(const Penalty& penalty, const NormalizationModel& model,
                     const ShapeDomain& domain, const Vector& residuals,
                     Vector theta, int max_iter = 50);

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace selftune
