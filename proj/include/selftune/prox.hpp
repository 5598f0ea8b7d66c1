#pragma once

#include "selftune/normalization.hpp"
#include "selftune/penalty.hpp"

namespace selftune {

struct ProxOptions {
  /// Bound on the projected-gradient residual, measured in units of theta.
  double tol = 1e-8;
  int max_iter = 200;
  int restarts = 2;
  double armijo = 1e-4;
  /// Consecutive domain-capped Newton steps before switching to the barrier.
  int boundary_hits = 3;
};

struct ProxResult {
  Vector theta;
  double residual = 0.0;
  int iterations = 0;
  bool used_barrier = false;
};

/// argmin over theta in D of 1/(2 step) ||theta - phi||^2 + weight * log n_c(theta).
///
/// Damped Newton with an eigenvalue-modified Hessian and steps kept strictly
/// inside D. When Newton keeps running into the boundary of D the solve
/// switches to a log-barrier continuation. Throws SolverError carrying the
/// best point found when no restart reaches the tolerance.
ProxResult prox_r2_solve(const Vector& phi, double step,
                         const NormalizationModel& model,
                         const ShapeDomain& domain, double weight,
                         const ProxOptions& opts = {});

/// The minimizer only; see prox_r2_solve.
Vector prox_r2(const Vector& phi, double step, const NormalizationModel& model,
               const ShapeDomain& domain, double weight,
               const ProxOptions& opts = {});

/// Value of the prox objective, +infinity outside D or where n_c diverges.
double prox_r2_objective(const Vector& theta, const Vector& phi, double step,
                         const NormalizationModel& model,
                         const ShapeDomain& domain, double weight);

/// ||theta - P_D(theta - g / L)|| for the prox objective gradient g, with L
/// the curvature scale 1/step + weight * ||hess log n_c||. P_D is the exact
/// projection when D is a set of lower bounds; for other polyhedra only the
/// components pushing into active constraints are removed.
double prox_r2_residual(const Vector& theta, const Vector& phi, double step,
                        const NormalizationModel& model,
                        const ShapeDomain& domain, double weight);

}  // namespace selftune
