#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "selftune/normalization.hpp"
#include "selftune/penalty.hpp"

namespace selftune {

/// Robust regression min_{x, theta in D} sum_i rho(y_i - <a_i, x>; theta)
/// + m log n_c(theta) with a PLQ penalty, posed for the interior-point solver.
///
/// The KKT system is written for the residual B(A x - y); internally the
/// problem is stored with A and y negated so that this equals B(y - A x), the
/// library-wide residual convention.
class IpProblem {
 public:
  /// Joint problem in (x, theta); theta ranges over the penalty's domain.
  static IpProblem self_tuning(Matrix A, Vector y, PenaltyPtr penalty,
                               double nc_tol = 1e-10);
  /// Problem in x alone with theta pinned; rho is multiplied by `scale`.
  static IpProblem fixed_shape(Matrix A, Vector y, PenaltyPtr penalty,
                               Vector theta, double scale = 1.0);
  /// Joint problem with an explicitly supplied atom, domain and normalization
  /// (used for diagnostics and tests).
  static IpProblem custom(Matrix A, Vector y, PlqAtom atom, ShapeDomain domain,
                          std::shared_ptr<const NormalizationModel> model);

  int m() const { return static_cast<int>(A_.rows()); }
  int n() const { return static_cast<int>(A_.cols()); }
  int k_u() const { return atom_.dual_dim(); }
  int k_c() const { return atom_.constraint_dim(); }
  int k_theta() const { return atom_.shape_dim(); }
  int k_s() const { return domain_.num_constraints(); }
  /// Length of the stacked vector z = (d1, q1, q2, u, x, theta).
  int state_dim() const;

  /// A and y in the user's convention (r = y - A x).
  const Matrix& A() const { return A_; }
  const Vector& y() const { return y_; }
  const PlqAtom& atom() const { return atom_; }
  const ShapeDomain& domain() const { return domain_; }
  const NormalizationModel* normalization() const { return model_.get(); }
  const PenaltyPtr& penalty() const { return penalty_; }
  /// Shape parameters used to evaluate rho: theta itself, or the pinned value.
  Vector effective_theta(const Vector& theta) const;

  /// sum_i scale * rho(y_i - <a_i, x>; theta) + m log n_c(theta). For
  /// fixed-shape problems the log n_c term is included only when scale is 1
  /// and the penalty is integrable.
  double objective(const Vector& x, const Vector& theta) const;

 private:
  Matrix A_;
  Vector y_;
  PlqAtom atom_;
  ShapeDomain domain_;
  std::shared_ptr<const NormalizationModel> model_;
  PenaltyPtr penalty_;
  std::optional<Vector> pinned_;
  double scale_ = 1.0;
};

/// Interior-point iterate z = (d1, q1, q2, u, x, theta) and barrier mu.
/// q2 and u are stacked per residual: q2 = [q2_1; ...; q2_m], q2_i in R^{k_c}.
struct IpState {
  Vector d1;
  Vector q1;
  Vector q2;
  Vector u;
  Vector x;
  Vector theta;
  double mu = 1.0;

  /// d2 = c + H'theta - C'u_i, stacked per residual.
  Vector d2(const IpProblem& problem) const;
  Vector pack() const;
  static IpState unpack(const Vector& z, const IpProblem& problem, double mu);
  /// Positivity of d1, q1, q2, d2 and strict interiority of theta.
  bool strictly_feasible(const IpProblem& problem) const;
};

/// Initialization: x = least squares; theta = maximum-likelihood shape for the
/// least-squares residuals (the domain's interior point when the problem has
/// no normalization model); u_i = maximizer of the barrier-smoothed conjugate
/// at residual i; d1 = s - S'theta; q = mu0 / d. Every complementarity product
/// equals mu0 and the u-rows of F_mu vanish at the returned point.
IpState initial_state(const IpProblem& problem, double mu0 = 1.0);

/// F_mu(z) in the row order (D1 q1 - mu; d1 + S'theta - s; D2 q2 - mu;
/// B(Ax - y) - G'theta - b - M u - C q2; A'B'u; -G u + m grad log n_c + S q1 + H q2).
Vector kkt_residual(const IpState& state, const IpProblem& problem);

/// Jacobian of F_mu at `state` applied to v (matrix-free).
Vector kkt_jacobian_apply(const IpState& state, const IpProblem& problem,
                          const Vector& v);

/// Solves grad F_mu(state) p = rhs by block elimination down to the
/// k_theta x k_theta system in T5. Throws SingularBlockError naming T3, T4 or
/// T5 when a block cannot be factored.
Vector solve_newton_system(const IpState& state, const IpProblem& problem,
                           const Vector& rhs);

struct IpOptions {
  double tol = 1e-8;
  int max_iter = 100;
  double mu0 = 1.0;
  double mu_floor = 1e-12;
  double mu_stop = 1e-10;
  double fraction_to_boundary = 0.995;
  double armijo = 1e-4;
  double backtrack = 0.5;
  double min_step = 1e-12;
  /// theta is held at its starting value while mu exceeds this.
  double shape_release_mu = 0.1;
};

/// Largest alpha = min(1, fraction * alpha_max) keeping d1, q1, q2, d2 and the
/// theta slack positive along z - alpha p, then halved until
/// ||F_mu(z - alpha p)|| <= (1 - armijo alpha) ||F_mu(z)||.
/// Throws SolverError when alpha drops below opts.min_step.
double line_search(const IpState& state, const Vector& direction,
                   const IpProblem& problem, const IpOptions& opts = {});

struct IpTraceRow {
  int iter = 0;
  double merit = 0.0;     ///< ||F_mu||_2 before the step
  double kkt_inf = 0.0;   ///< ||F_0||_inf before the step
  double mu = 0.0;
  double alpha = 0.0;
  double objective = 0.0;
};

struct IpResult {
  Vector x;
  Vector theta;
  IpState state;
  int iterations = 0;
  bool converged = false;
  std::vector<IpTraceRow> trace;
};

/// Damped Newton on F_mu with mu <- max(floor, 0.1 * mean(d o q)) after each
/// step; stops once ||F_0||_inf <= tol and mu <= mu_stop.
///
/// Two safeguards handle the nonconvexity in theta. While mu >
/// shape_release_mu the theta step is zero and the merit omits the theta rows.
/// Afterwards negative eigenvalues of T5 are reflected, and the plain Newton
/// step is used whenever the reflected one fails the merit test.
IpResult ip_solve(const IpProblem& problem, const IpOptions& opts = {});
IpResult ip_solve(const IpProblem& problem, IpState start,
                  const IpOptions& opts);

struct ConditionCheck {
  bool pass = false;
  /// Smallest singular value (or -lambda_max for strong concavity).
  double margin = 0.0;
};

struct ImplementabilityReport {
  ConditionCheck null_m_ct;         ///< null(M) and null(C') intersect trivially
  ConditionCheck null_ba;           ///< null(BA) = {0}
  ConditionCheck null_t5;           ///< stacked T5 constituents have full column rank
  ConditionCheck strongly_concave;  ///< log n_c strongly concave at theta
  bool implementable() const {
    return null_m_ct.pass && null_ba.pass && (null_t5.pass || strongly_concave.pass);
  }
  std::string summary() const;
};

/// Evaluates the three null-space conditions at theta (with T2 taken at the
/// standard initial point, q2 = 1/d2) and the strong-concavity alternative.
/// `model` may be null when the atom carries no shape parameters.
ImplementabilityReport check_implementability(const PlqAtom& atom,
                                              const ShapeDomain& domain,
                                              const Matrix& A,
                                              const Vector& theta,
                                              const NormalizationModel* model,
                                              double threshold = 1e-10);

/// A point with C'u < cbar strictly, or throws std::invalid_argument.
Vector strictly_feasible_dual(const PlqAtom& atom, const Vector& theta);

}  // namespace selftune
