#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "selftune/types.hpp"

namespace selftune {

/// Conjugate description of a scalar piecewise linear-quadratic penalty
///
///   rho(r; theta) = sup_u { u'(B r - bbar) - 1/2 u'M u  :  C'u <= cbar },
///   bbar = G'theta + b,   cbar = H'theta + c.
///
/// k_u = dual dimension, k_c = number of constraints, k_theta = shape
/// parameters.
struct PlqAtom {
  Matrix B;  ///< k_u x 1
  Vector b;  ///< k_u
  Matrix C;  ///< k_u x k_c
  Vector c;  ///< k_c
  Matrix M;  ///< k_u x k_u, symmetric PSD
  Matrix G;  ///< k_theta x k_u
  Matrix H;  ///< k_theta x k_c

  int dual_dim() const { return static_cast<int>(B.rows()); }
  int constraint_dim() const { return static_cast<int>(C.cols()); }
  int shape_dim() const { return static_cast<int>(G.rows()); }

  Vector b_bar(const Vector& theta) const;
  Vector c_bar(const Vector& theta) const;

  /// Throws std::invalid_argument on inconsistent shapes or a non-PSD M.
  void validate() const;

  /// Atom of factor * rho.
  PlqAtom scaled(double factor) const;

  /// Atom with theta substituted, so that it carries no shape parameters.
  PlqAtom pinned(const Vector& theta) const;
};

/// Polyhedral shape domain D = { theta : S'theta <= s }.
struct ShapeDomain {
  Matrix S;  ///< k_theta x k_s
  Vector s;  ///< k_s
  Vector interior_point;

  int shape_dim() const { return static_cast<int>(S.rows()); }
  int num_constraints() const { return static_cast<int>(S.cols()); }

  /// s - S'theta.
  Vector slack(const Vector& theta) const;
  bool strictly_contains(const Vector& theta) const;

  /// Largest alpha in [0, 1] with slack(theta + alpha*dir) >= (1-fraction)*slack(theta).
  double max_step(const Vector& theta, const Vector& dir,
                  double fraction = 0.995) const;

  /// theta_i >= lower_i for every component.
  static ShapeDomain lower_bounds(const Vector& lower, const Vector& interior);
  /// Domain of a penalty without shape parameters.
  static ShapeDomain empty();
};

/// How the density decays outside the outermost breakpoints.
enum class TailKind {
  exact_linear,  ///< rho is exactly affine beyond the outermost breakpoints
  truncated,     ///< faster-than-exponential or only asymptotically linear
};

struct TailInfo {
  TailKind kind = TailKind::truncated;
  double left_slope = 0.0;   ///< -d rho/dr for r below the first breakpoint
  double right_slope = 0.0;  ///< d rho/dr for r above the last breakpoint
};

/// A penalty family rho(r; theta). Instances are immutable.
///
/// `theta_gradient` and `theta_hessian` are the almost-everywhere derivatives
/// in theta, available for every family; `derivative_r` only for families that
/// are C^1 in r.
class Penalty {
 public:
  virtual ~Penalty() = default;

  virtual std::string_view key() const = 0;
  virtual std::vector<std::string> parameter_names() const = 0;
  int num_params() const { return static_cast<int>(parameter_names().size()); }
  virtual ShapeDomain domain() const = 0;

  /// C^1 in r and C^1 in theta on the whole line.
  virtual bool smooth() const = 0;
  /// exp(-rho) has finite integral on the interior of the domain.
  virtual bool integrable() const { return true; }

  virtual double value(double r, const Vector& theta) const = 0;
  virtual double derivative_r(double r, const Vector& theta) const;
  virtual Vector theta_gradient(double r, const Vector& theta) const = 0;
  virtual Matrix theta_hessian(double r, const Vector& theta) const = 0;

  /// sup_r d^2 rho / dr^2, used for Lipschitz steps.
  virtual double curvature_bound(const Vector& theta) const;

  /// Sorted residual values where the piecewise definition changes.
  virtual std::vector<double> breakpoints(const Vector& theta) const = 0;
  virtual TailInfo tails(const Vector& theta) const = 0;

  /// Conjugate representation with affine theta dependence, when one exists.
  virtual std::optional<PlqAtom> atom() const { return std::nullopt; }

  /// Throws DomainError naming the violated parameter unless theta lies
  /// strictly inside the domain.
  void check_domain(const Vector& theta) const;
};

using PenaltyPtr = std::shared_ptr<const Penalty>;

/// Keys: quantile, huber, quantile_huber, huber_scaled, huberized_t, vapnik,
/// elastic_net, l2, hinge, smooth_insensitive, hybrid, logistic.
PenaltyPtr make_penalty(std::string_view key);
std::vector<std::string> catalog_keys();
std::vector<PenaltyPtr> catalog();

/// Domain-checked primal evaluation.
double eval_primal(const Penalty& penalty, double r, const Vector& theta);
/// Domain-checked derivatives; throw UnsupportedError for kinked families.
double grad_r(const Penalty& penalty, double r, const Vector& theta);
Vector grad_theta(const Penalty& penalty, double r, const Vector& theta);

/// theta = (tau*kappa, (1-tau)*kappa).
Vector quantile_huber_theta(double tau, double kappa);
/// Inverse of quantile_huber_theta: returns (tau, kappa).
std::pair<double, double> quantile_huber_tau_kappa(const Vector& theta);

}  // namespace selftune
