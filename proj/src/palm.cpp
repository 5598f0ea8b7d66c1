#include "selftune/palm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "selftune/errors.hpp"
#include "selftune/linalg.hpp"

namespace selftune {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Rounding allowance in the descent tests; sums of m penalty values carry a
/// relative error of this order.
double rel_slack(double value) { return 1e-12 * (1.0 + std::abs(value)); }

/// Objective changes below this are indistinguishable from rounding.
double noise_level(double value) { return 1e-10 * (1.0 + std::abs(value)); }

}  // namespace

// ---------------------------------------------------------------------------
// Regularizer

Regularizer Regularizer::l1(double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("l1 weight must be >= 0");
  Regularizer r;
  r.kind = Kind::l1;
  r.lambda = lambda;
  return r;
}

Regularizer Regularizer::box(Vector lower, Vector upper) {
  if (lower.size() != upper.size() || (lower.array() > upper.array()).any()) {
    throw std::invalid_argument("box bounds must satisfy lower <= upper");
  }
  Regularizer r;
  r.kind = Kind::box;
  r.lower = std::move(lower);
  r.upper = std::move(upper);
  return r;
}

double Regularizer::value(const Vector& x) const {
  switch (kind) {
    case Kind::zero:
      return 0.0;
    case Kind::l1:
      return lambda * x.lpNorm<1>();
    case Kind::box:
      if (x.size() != lower.size()) {
        throw std::invalid_argument("box regularizer has the wrong dimension");
      }
      return ((x.array() < lower.array()) || (x.array() > upper.array())).any()
                 ? kInf
                 : 0.0;
  }
  return 0.0;
}

Vector Regularizer::prox(const Vector& v, double step) const {
  switch (kind) {
    case Kind::zero:
      return v;
    case Kind::l1: {
      const double t = lambda * step;
      return v.unaryExpr([t](double a) {
        return std::copysign(std::max(std::abs(a) - t, 0.0), a);
      });
    }
    case Kind::box:
      return v.cwiseMax(lower).cwiseMin(upper);
  }
  return v;
}

// ---------------------------------------------------------------------------
// PalmProblem

PalmProblem::PalmProblem(Matrix A, Vector y, PenaltyPtr penalty,
                         Regularizer r1, double nc_tol)
    : A_(std::move(A)),
      y_(std::move(y)),
      penalty_(std::move(penalty)),
      r1_(std::move(r1)) {
  if (!penalty_) throw std::invalid_argument("PalmProblem: null penalty");
  if (A_.rows() != y_.size()) {
    throw std::invalid_argument("PalmProblem: A and y disagree in rows");
  }
  if (!penalty_->smooth()) {
    throw UnsupportedError("penalty '" + std::string(penalty_->key()) +
                           "' is not differentiable in r: gradient "
                           "unavailable; use IP solver");
  }
  if (!penalty_->integrable()) {
    throw UnsupportedError("penalty '" + std::string(penalty_->key()) +
                           "' has no normalization constant");
  }
  model_ = std::make_shared<const NormalizationModel>(penalty_, nc_tol);
  domain_ = penalty_->domain();
  a_norm_ = spectral_norm(A_);
}

double PalmProblem::smooth_part(const Vector& x, const Vector& theta) const {
  const Vector r = y_ - A_ * x;
  double h = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) h += penalty_->value(r[i], theta);
  return h;
}

Vector PalmProblem::grad_x(const Vector& x, const Vector& theta) const {
  const Vector r = y_ - A_ * x;
  Vector w(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    w[i] = penalty_->derivative_r(r[i], theta);
  }
  return -(A_.transpose() * w);
}

Vector PalmProblem::grad_theta(const Vector& x, const Vector& theta) const {
  const Vector r = y_ - A_ * x;
  Vector g = Vector::Zero(theta.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    g += penalty_->theta_gradient(r[i], theta);
  }
  return g;
}

Matrix PalmProblem::hess_theta(const Vector& x, const Vector& theta) const {
  const Vector r = y_ - A_ * x;
  Matrix h = Matrix::Zero(theta.size(), theta.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    h += penalty_->theta_hessian(r[i], theta);
  }
  return h;
}

double PalmProblem::objective(const Vector& x, const Vector& theta) const {
  if (!domain_.strictly_contains(theta)) return kInf;
  double lognc;
  try {
    lognc = model_->log_nc(theta);
  } catch (const Error&) {
    return kInf;
  }
  return smooth_part(x, theta) + r1_.value(x) + m() * lognc;
}

// ---------------------------------------------------------------------------
// Step sizes

double power_iteration(const Matrix& S, int max_iter, double tol) {
  const auto k = S.rows();
  if (k == 0) return 0.0;
  Vector v = Vector::Ones(k) / std::sqrt(static_cast<double>(k));
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const Vector w = S * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    const double next = std::abs(v.dot(w));
    v = w / norm;
    if (std::abs(next - lambda) <= tol * std::max(1.0, next)) {
      return std::max(next, norm);
    }
    lambda = next;
  }
  return std::max(lambda, (S * v).norm());
}

StepSizes step_sizes(const PalmProblem& problem, const Vector& x,
                     const Vector& theta, double gamma) {
  // Floors keep the steps finite where H is locally flat; a theta step of
  // order 1/m keeps the prox subproblem well conditioned.
  const double m = std::max(1, problem.m());
  StepSizes s;
  const double a = problem.a_norm();
  s.c = gamma * std::max(a * a * problem.penalty().curvature_bound(theta),
                         1e-8 * m);
  s.d = gamma * std::max(power_iteration(problem.hess_theta(x, theta)),
                         1e-4 * m);
  return s;
}

// ---------------------------------------------------------------------------
// Solver

PalmResult palm_solve(const PalmProblem& problem, const PalmOptions& opts) {
  return palm_solve(problem, least_squares(problem.A(), problem.y()),
                    problem.domain().interior_point, opts);
}

PalmResult palm_solve(const PalmProblem& problem, const Vector& x0,
                      const Vector& theta0, const PalmOptions& opts) {
  if (x0.size() != problem.n()) {
    throw std::invalid_argument("palm_solve: x0 has the wrong dimension");
  }
  if (!problem.domain().strictly_contains(theta0)) {
    throw DomainError("palm_solve: theta0 must lie strictly inside D",
                      "theta0");
  }
  const double grow = 1.0 / opts.backtrack;
  const double w = problem.m();
  const NormalizationModel& model = problem.normalization();
  const ShapeDomain& domain = problem.domain();

  PalmResult res;
  Vector x = x0;
  Vector theta = theta0;
  double log_nc = model.log_nc(theta);
  double h = problem.smooth_part(x, theta);
  double r1 = problem.regularizer().value(x);
  res.initial_objective = h + r1 + w * log_nc;
  if (!std::isfinite(res.initial_objective)) {
    throw SolverError("palm_solve: objective is not finite at the start", x,
                      theta);
  }

  for (int k = 0; k < opts.max_iter; ++k) {
    PalmTraceRow row;
    row.iter = k + 1;
    const StepSizes init = step_sizes(problem, x, theta, opts.gamma);

    // x step: prox-gradient on H(., theta) + r1 with constant c.
    Vector x_new = x;
    if (!opts.freeze_x) {
      const Vector g = problem.grad_x(x, theta);
      double c = init.c;
      double least_rise = kInf;
      bool accepted = false;
      for (int bt = 0; bt <= opts.max_backtracks; ++bt, c *= grow) {
        const Vector trial = problem.regularizer().prox(x - g / c, 1.0 / c);
        const Vector dx = trial - x;
        const double h_trial = problem.smooth_part(trial, theta);
        const double r1_trial = problem.regularizer().value(trial);
        least_rise = std::min(least_rise, h_trial + r1_trial - h - r1);
        const bool lemma = h_trial <= h + g.dot(dx) + 0.5 * c * dx.squaredNorm() +
                                          rel_slack(h);
        if (lemma && h_trial + r1_trial <= h + r1 + rel_slack(h + r1)) {
          x_new = trial;
          h = h_trial;
          r1 = r1_trial;
          accepted = true;
          break;
        }
      }
      // Exhausting the backtracks with only rounding-level increases means x
      // is stationary to working precision; it is kept unchanged.
      if (!accepted && !(least_rise <= noise_level(h + r1))) {
        throw SolverError("palm_solve: x step found no descent after " +
                              std::to_string(opts.max_backtracks) +
                              " backtracks",
                          x, theta);
      }
      row.c = accepted ? c : init.c;
    }

    // theta step: prox-gradient on H(x_new, .) + r2 with constant d.
    Vector theta_new = theta;
    if (!opts.freeze_theta) {
      const Vector g = problem.grad_theta(x_new, theta);
      double d = opts.freeze_x
                     ? init.d
                     : step_sizes(problem, x_new, theta, opts.gamma).d;
      const double base = h + w * log_nc;
      double least_rise = kInf;
      bool accepted = false;
      for (int bt = 0; bt <= opts.max_backtracks; ++bt, d *= grow) {
        Vector trial;
        try {
          trial = prox_r2(theta - g / d, 1.0 / d, model, domain, w, opts.prox);
        } catch (const SolverError& e) {
          throw SolverError(std::string("palm_solve: theta prox failed: ") +
                                e.what(),
                            x_new, theta);
        }
        const Vector dt = trial - theta;
        const double h_trial = problem.smooth_part(x_new, trial);
        const double lognc_trial = model.log_nc(trial);
        least_rise = std::min(least_rise, h_trial + w * lognc_trial - base);
        const bool lemma = h_trial <= h + g.dot(dt) + 0.5 * d * dt.squaredNorm() +
                                          rel_slack(h);
        if (lemma && h_trial + w * lognc_trial <= base + rel_slack(base)) {
          theta_new = trial;
          h = h_trial;
          log_nc = lognc_trial;
          accepted = true;
          break;
        }
      }
      if (!accepted && !(least_rise <= noise_level(base))) {
        throw SolverError("palm_solve: theta step found no descent after " +
                              std::to_string(opts.max_backtracks) +
                              " backtracks",
                          x_new, theta);
      }
      row.d = accepted ? d : init.d;
    }

    row.dx = (x_new - x).norm();
    row.dtheta = (theta_new - theta).norm();
    row.objective = h + r1 + w * log_nc;
    res.trace.push_back(row);
    x = std::move(x_new);
    theta = std::move(theta_new);
    res.iterations = k + 1;

    const double scale =
        1.0 + std::sqrt(x.squaredNorm() + theta.squaredNorm());
    if (std::max(row.dx, row.dtheta) <= opts.tol * scale) {
      res.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  res.theta = std::move(theta);
  return res;
}

}  // namespace selftune
