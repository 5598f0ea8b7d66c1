#include "selftune/prox.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

#include "selftune/errors.hpp"

namespace selftune {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ProxEval {
  double value = kInf;
  Vector grad;
  Matrix hess;
  /// 1/step + weight * ||hess log n_c||_2.
  double scale = 0.0;
};

/// Prox objective plus t * sum -log(slack), with derivatives up to `order`.
ProxEval evaluate(const Vector& theta, const Vector& phi, double step,
                  const NormalizationModel& model, const ShapeDomain& domain,
                  double weight, double t, int order) {
  ProxEval e;
  if (!theta.allFinite() || !domain.strictly_contains(theta)) return e;
  LogNcDerivatives d;
  try {
    d = model.evaluate(theta, order);
  } catch (const Error&) {
    return e;
  }
  if (!std::isfinite(d.value)) return e;
  const Vector diff = theta - phi;
  const Vector slack = domain.slack(theta);
  double value = 0.5 * diff.squaredNorm() / step + weight * d.value;
  if (t > 0.0) value -= t * slack.array().log().sum();
  e.value = value;
  if (order < 1) return e;
  e.grad = diff / step + weight * d.gradient;
  if (t > 0.0) e.grad += t * domain.S * slack.cwiseInverse();
  if (order < 2) return e;
  const auto k = theta.size();
  e.hess = Matrix::Identity(k, k) / step + weight * d.hessian;
  if (t > 0.0) {
    e.hess += t * domain.S * slack.array().square().inverse().matrix().asDiagonal() *
              domain.S.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(d.hessian, Eigen::EigenvaluesOnly);
  e.scale = 1.0 / step + weight * eig.eigenvalues().cwiseAbs().maxCoeff();
  return e;
}

bool is_lower_bounds(const ShapeDomain& domain) {
  const auto k = domain.shape_dim();
  return domain.num_constraints() == k &&
         domain.S.isApprox(-Matrix::Identity(k, k), 0.0);
}

double projected_residual(const Vector& theta, const Vector& grad, double L,
                          const ShapeDomain& domain) {
  if (domain.num_constraints() == 0) return grad.norm() / L;
  if (is_lower_bounds(domain)) {
    const Vector lower = -domain.s;
    const Vector proj = (theta - grad / L).cwiseMax(lower);
    return (theta - proj).norm();
  }
  // General polyhedron: drop the gradient component pushing into each
  // nearly active constraint whose outward normal it opposes.
  Vector g = grad;
  const Vector slack = domain.slack(theta);
  for (Eigen::Index j = 0; j < slack.size(); ++j) {
    const Vector n = domain.S.col(j);
    const double nn = n.squaredNorm();
    if (nn == 0.0) continue;
    const double dist = slack[j] / std::sqrt(nn);
    const double push = -g.dot(n);  // rate of slack loss along -g
    if (push > 0.0 && dist <= push / (L * std::sqrt(nn))) g += (push / nn) * n;
  }
  return g.norm() / L;
}

Vector newton_direction(const ProxEval& e) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(e.hess);
  Vector lam = eig.eigenvalues().cwiseAbs();
  const double floor = 1e-12 * std::max(1.0, lam.maxCoeff());
  lam = lam.cwiseMax(floor);
  const Matrix& V = eig.eigenvectors();
  return -(V * (V.transpose() * e.grad).cwiseQuotient(lam));
}

/// Strictly interior point on the segment from the interior point to phi.
Vector pull_inside(const Vector& phi, const ShapeDomain& domain) {
  if (domain.strictly_contains(phi)) return phi;
  const Vector& c = domain.interior_point;
  return c + domain.max_step(c, phi - c, 0.99) * (phi - c);
}

struct Attempt {
  Vector theta;
  double residual = kInf;
  double value = kInf;
  int iterations = 0;
  bool used_barrier = false;
};

/// One undamped Newton step from a converged point, kept when it lowers the
/// residual. Quadratic convergence takes theta to working precision.
void polish(Attempt& a, const ProxEval& e, const Vector& phi, double step,
            const NormalizationModel& model, const ShapeDomain& domain,
            double weight) {
  const Vector trial = a.theta + newton_direction(e);
  const ProxEval te = evaluate(trial, phi, step, model, domain, weight, 0.0, 2);
  if (!std::isfinite(te.value) || !te.grad.allFinite()) return;
  const double res = projected_residual(trial, te.grad, te.scale, domain);
  if (res < a.residual) {
    a.theta = trial;
    a.residual = res;
    a.value = te.value;
  }
}

Attempt newton_from(Vector theta, const Vector& phi, double step,
                    const NormalizationModel& model, const ShapeDomain& domain,
                    double weight, const ProxOptions& opts) {
  Attempt a;
  a.theta = theta;
  double t = 0.0;
  int hits = 0;
  for (int it = 0; it < opts.max_iter; ++it) {
    a.iterations = it;
    ProxEval e = evaluate(theta, phi, step, model, domain, weight, t, 2);
    if (!std::isfinite(e.value) || !e.grad.allFinite()) return a;
    const ProxEval plain =
        t > 0.0 ? evaluate(theta, phi, step, model, domain, weight, 0.0, 1) : e;
    const double res = projected_residual(theta, plain.grad, e.scale, domain);
    if (res < a.residual) {
      a.theta = theta;
      a.residual = res;
      a.value = plain.value;
    }
    if (res <= opts.tol) {
      if (t == 0.0) polish(a, e, phi, step, model, domain, weight);
      return a;
    }
    if (t > 0.0 && e.grad.norm() / e.scale <= 0.1 * opts.tol) {
      t *= 0.1;
      if (t < 1e-300) return a;
      continue;
    }

    const Vector dir = newton_direction(e);
    const double slope = e.grad.dot(dir);
    if (!(slope < 0.0)) return a;
    const double cap = domain.max_step(theta, dir, 0.99);
    double alpha = cap;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      const Vector trial = theta + alpha * dir;
      const ProxEval te =
          evaluate(trial, phi, step, model, domain, weight, t, 1);
      // Close to the minimizer the decrease drops below the rounding error of
      // the value; a halved gradient norm with no visible increase then
      // counts as progress.
      const bool armijo = te.value <= e.value + opts.armijo * alpha * slope;
      const bool flat = te.value <= e.value + 1e-14 * (1.0 + std::abs(e.value)) &&
                        te.grad.norm() <= 0.5 * e.grad.norm();
      if (armijo || flat) {
        theta = trial;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (t > 0.0) {
        t *= 0.1;
        continue;
      }
      return a;
    }
    if (t == 0.0) {
      hits = (cap < 1.0 && alpha == cap) ? hits + 1 : 0;
      if (hits >= opts.boundary_hits) {
        // Newton keeps hitting the boundary: follow the barrier path from a
        // weight comparable to the current gradient.
        const double min_slack = domain.slack(theta).minCoeff();
        t = std::max(1e-300, e.grad.norm() * min_slack);
        a.used_barrier = true;
      }
    }
  }
  return a;
}

}  // namespace

double prox_r2_objective(const Vector& theta, const Vector& phi, double step,
                         const NormalizationModel& model,
                         const ShapeDomain& domain, double weight) {
  return evaluate(theta, phi, step, model, domain, weight, 0.0, 0).value;
}

double prox_r2_residual(const Vector& theta, const Vector& phi, double step,
                        const NormalizationModel& model,
                        const ShapeDomain& domain, double weight) {
  const ProxEval e = evaluate(theta, phi, step, model, domain, weight, 0.0, 2);
  if (!std::isfinite(e.value)) return kInf;
  return projected_residual(theta, e.grad, e.scale, domain);
}

ProxResult prox_r2_solve(const Vector& phi, double step,
                         const NormalizationModel& model,
                         const ShapeDomain& domain, double weight,
                         const ProxOptions& opts) {
  if (!(step > 0.0) || !std::isfinite(step)) {
    throw std::invalid_argument("prox_r2: step must be positive and finite");
  }
  if (phi.size() != domain.shape_dim()) {
    throw std::invalid_argument("prox_r2: phi has the wrong dimension");
  }
  if (!phi.allFinite()) throw std::invalid_argument("prox_r2: phi not finite");

  const Vector first = pull_inside(phi, domain);
  std::vector<Vector> starts = {first, domain.interior_point,
                                0.5 * (first + domain.interior_point)};
  Attempt best;
  const int tries = std::min<int>(opts.restarts + 1, starts.size());
  for (int i = 0; i < tries; ++i) {
    if (!domain.strictly_contains(starts[i])) continue;
    Attempt a = newton_from(starts[i], phi, step, model, domain, weight, opts);
    if (a.residual <= opts.tol) {
      return {a.theta, a.residual, a.iterations, a.used_barrier};
    }
    if (a.value < best.value || best.theta.size() == 0) best = a;
  }
  throw SolverError("prox_r2: Newton did not reach the optimality tolerance "
                    "(best residual " + std::to_string(best.residual) + ")",
                    Vector(), best.theta);
}

Vector prox_r2(const Vector& phi, double step, const NormalizationModel& model,
               const ShapeDomain& domain, double weight,
               const ProxOptions& opts) {
  return prox_r2_solve(phi, step, model, domain, weight, opts).theta;
}

}  // namespace selftune
