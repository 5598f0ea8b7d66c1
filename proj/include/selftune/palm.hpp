#pragma once

#include <memory>
#include <vector>

#include "selftune/normalization.hpp"
#include "selftune/penalty.hpp"
#include "selftune/prox.hpp"

namespace selftune {

/// Prox-friendly regularizer r1(x).
struct Regularizer {
  enum class Kind { zero, l1, box };
  Kind kind = Kind::zero;
  double lambda = 0.0;  ///< weight of lambda ||x||_1
  Vector lower;         ///< box bounds, may hold -inf / +inf
  Vector upper;

  static Regularizer none() { return {}; }
  static Regularizer l1(double lambda);
  static Regularizer box(Vector lower, Vector upper);

  /// +infinity outside the box.
  double value(const Vector& x) const;
  /// argmin_z r1(z) + 1/(2 step) ||z - v||^2.
  Vector prox(const Vector& v, double step) const;
};

/// min_{x, theta} H(x, theta) + r1(x) + r2(theta) with
/// H = sum_i rho(y_i - <a_i, x>; theta) and r2 = indicator(D) + m log n_c.
class PalmProblem {
 public:
  /// Throws UnsupportedError unless the penalty is smooth and integrable.
  PalmProblem(Matrix A, Vector y, PenaltyPtr penalty,
              Regularizer r1 = Regularizer::none(), double nc_tol = 1e-10);

  int m() const { return static_cast<int>(A_.rows()); }
  int n() const { return static_cast<int>(A_.cols()); }
  const Matrix& A() const { return A_; }
  const Vector& y() const { return y_; }
  const Penalty& penalty() const { return *penalty_; }
  const PenaltyPtr& penalty_ptr() const { return penalty_; }
  const NormalizationModel& normalization() const { return *model_; }
  const ShapeDomain& domain() const { return domain_; }
  const Regularizer& regularizer() const { return r1_; }
  /// ||A||_2, computed once.
  double a_norm() const { return a_norm_; }

  double smooth_part(const Vector& x, const Vector& theta) const;  ///< H
  Vector grad_x(const Vector& x, const Vector& theta) const;
  Vector grad_theta(const Vector& x, const Vector& theta) const;
  Matrix hess_theta(const Vector& x, const Vector& theta) const;
  /// H + r1 + m log n_c; +infinity outside D.
  double objective(const Vector& x, const Vector& theta) const;

 private:
  Matrix A_;
  Vector y_;
  PenaltyPtr penalty_;
  std::shared_ptr<const NormalizationModel> model_;
  ShapeDomain domain_;
  Regularizer r1_;
  double a_norm_ = 0.0;
};

struct PalmOptions {
  double tol = 1e-8;
  int max_iter = 5000;
  /// Safety factor on the Lipschitz estimates.
  double gamma = 1.1;
  /// Step multiplier applied on each sufficient-decrease failure.
  double backtrack = 0.5;
  int max_backtracks = 50;
  /// Skip the theta step (theta stays at theta0).
  bool freeze_theta = false;
  /// Skip the x step (x stays at x0).
  bool freeze_x = false;
  ProxOptions prox;
};

struct PalmTraceRow {
  int iter = 0;
  double objective = 0.0;  ///< after the step
  double c = 0.0;          ///< accepted x-step constant
  double d = 0.0;          ///< accepted theta-step constant
  double dx = 0.0;
  double dtheta = 0.0;
};

struct PalmResult {
  Vector x;
  Vector theta;
  std::vector<PalmTraceRow> trace;
  double initial_objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct StepSizes {
  double c = 0.0;
  double d = 0.0;
};

/// Initial constants before backtracking: c = gamma ||A||^2 L_rho(theta) and
/// d = gamma L_theta, with L_theta the largest |eigenvalue| of hess_theta H at
/// (x, theta) by power iteration, floored at 1e-4 m so that the prox
/// subproblem stays well conditioned.
StepSizes step_sizes(const PalmProblem& problem, const Vector& x,
                     const Vector& theta, double gamma = 1.1);

/// Largest |eigenvalue| of a symmetric matrix by power iteration.
double power_iteration(const Matrix& S, int max_iter = 200, double tol = 1e-10);

/// Proximal alternating linearized minimization: a prox-gradient step in x
/// with theta fixed, then one in theta with the new x. Each step constant is
/// doubled until the descent-lemma inequality holds and the objective does
/// not increase. Stops when max(||dx||, ||dtheta||) <= tol (1 + ||(x, theta)||)
/// or after max_iter iterations.
///
/// Throws SolverError with the last iterate when a prox subproblem fails or
/// no step constant yields descent within max_backtracks doublings.
PalmResult palm_solve(const PalmProblem& problem, const Vector& x0,
                      const Vector& theta0, const PalmOptions& opts = {});
/// Starts from x = least squares and theta = the domain's interior point.
PalmResult palm_solve(const PalmProblem& problem, const PalmOptions& opts = {});

}  // namespace selftune
