#include "selftune/rpca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/SVD>

#include "selftune/errors.hpp"
#include "selftune/linalg.hpp"
#include "selftune/palm.hpp"
#include "selftune/rng.hpp"

namespace selftune {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double rel_slack(double value) { return 1e-12 * (1.0 + std::abs(value)); }

/// Residual R = U'V - Y.
Matrix residual(const RpcaProblem& p, const Matrix& U, const Matrix& V) {
  return U.transpose() * V - p.Y;
}

/// Column-major fixed-order sum of rho over the entries of R.
double penalty_sum(const Penalty& pen, const Matrix& R, const Vector& theta) {
  double h = 0.0;
  const double* r = R.data();
  for (Eigen::Index i = 0; i < R.size(); ++i) h += pen.value(r[i], theta);
  return h;
}

Matrix derivative(const Penalty& pen, const Matrix& R, const Vector& theta) {
  Matrix psi(R.rows(), R.cols());
  for (Eigen::Index i = 0; i < R.size(); ++i) {
    psi.data()[i] = pen.derivative_r(R.data()[i], theta);
  }
  return psi;
}

Vector theta_gradient_sum(const Penalty& pen, const Matrix& R,
                          const Vector& theta) {
  Vector g = Vector::Zero(theta.size());
  for (Eigen::Index i = 0; i < R.size(); ++i) {
    g += pen.theta_gradient(R.data()[i], theta);
  }
  return g;
}

Matrix theta_hessian_sum(const Penalty& pen, const Matrix& R,
                         const Vector& theta) {
  Matrix h = Matrix::Zero(theta.size(), theta.size());
  for (Eigen::Index i = 0; i < R.size(); ++i) {
    h += pen.theta_hessian(R.data()[i], theta);
  }
  return h;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

}  // namespace

void RpcaProblem::validate() const {
  if (Y.size() == 0) throw InputError("RPCA: empty data matrix");
  if (!Y.allFinite()) throw InputError("RPCA: data matrix has non-finite entries");
  if (k < 1 || k > std::min(Y.rows(), Y.cols())) {
    throw InputError("RPCA: rank k must lie in [1, min(rows, cols)]");
  }
  if (penalty != "huber_scaled" && penalty != "huberized_t") {
    throw InputError("RPCA: penalty must be huber_scaled or huberized_t, got '" +
                     penalty + "'");
  }
  const Vector t = initial_theta();
  if (t.size() != 2 || !(t.array() > kRpcaThetaFloor).all()) {
    throw InputError("RPCA: initial (kappa, sigma) must be strictly positive");
  }
  if (!(init_scale > 0.0)) throw InputError("RPCA: init_scale must be positive");
}

Vector RpcaProblem::initial_theta() const {
  if (theta0.size() > 0) return theta0;
  Vector t(2);
  t << 2e-3, 1.0;
  return t;
}

ShapeDomain rpca_domain() {
  return ShapeDomain::lower_bounds(Vector::Constant(2, kRpcaThetaFloor),
                                   Vector::Ones(2));
}

void rpca_initial_factors(const Matrix& Y, int k, Matrix& U, Matrix& V) {
  Eigen::BDCSVD<Matrix> svd(Y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector root = svd.singularValues().head(k).cwiseSqrt();
  U = root.asDiagonal() * svd.matrixU().leftCols(k).transpose();
  V = root.asDiagonal() * svd.matrixV().leftCols(k).transpose();
}

double eval_rpca_objective(const RpcaProblem& problem, const Matrix& U,
                           const Matrix& V, const Vector& theta) {
  const PenaltyPtr pen = make_penalty(problem.penalty);
  if (!rpca_domain().strictly_contains(theta)) {
    throw DomainError("RPCA objective: theta must be strictly positive",
                      theta.size() == 2 && theta[0] <= kRpcaThetaFloor
                          ? "kappa"
                          : "sigma");
  }
  const NormalizationModel model(pen);
  const double w = static_cast<double>(problem.Y.size());
  return penalty_sum(*pen, residual(problem, U, V), theta) +
         w * model.log_nc(theta);
}

RpcaGradient rpca_gradient(const RpcaProblem& problem, const Matrix& U,
                           const Matrix& V, const Vector& theta) {
  const PenaltyPtr pen = make_penalty(problem.penalty);
  const Matrix R = residual(problem, U, V);
  const Matrix psi = derivative(*pen, R, theta);
  return {V * psi.transpose(), U * psi, theta_gradient_sum(*pen, R, theta)};
}

double median_absolute_deviation(const Matrix& S) {
  std::vector<double> v(S.data(), S.data() + S.size());
  const double med = median(v);
  for (double& x : v) x = std::abs(x - med);
  return median(std::move(v));
}

SeparationResult rpca_solve(const RpcaProblem& problem,
                            const RpcaOptions& opts) {
  problem.validate();
  const PenaltyPtr pen = make_penalty(problem.penalty);
  const NormalizationModel model(pen);
  const ShapeDomain domain = rpca_domain();
  const double w = static_cast<double>(problem.Y.size());
  const double grow = 1.0 / opts.backtrack;

  SeparationResult res;
  Matrix U, V;
  rpca_initial_factors(problem.Y, problem.k, U, V);
  U *= problem.init_scale;
  V *= problem.init_scale;
  Vector theta = problem.initial_theta();

  Matrix R = residual(problem, U, V);
  double h = penalty_sum(*pen, R, theta);
  double log_nc = model.log_nc(theta);
  double F = h + w * log_nc;
  res.initial_objective = F;

  // Prox-gradient step on one factor; `apply` maps a factor to the residual.
  const auto factor_step = [&](Matrix& X, const Matrix& grad, double c0,
                               const auto& apply, const char* name) {
    double c = c0;
    double least_rise = kInf;
    for (int bt = 0; bt <= opts.max_backtracks; ++bt, c *= grow) {
      const Matrix trial = X - grad / c;
      const Matrix Rt = apply(trial);
      const double ht = penalty_sum(*pen, Rt, theta);
      const Matrix dX = trial - X;
      least_rise = std::min(least_rise, ht - h);
      const bool lemma = ht <= h + (grad.array() * dX.array()).sum() +
                                   0.5 * c * dX.squaredNorm() + rel_slack(h);
      if (lemma && ht <= h + rel_slack(h)) {
        X = trial;
        R = Rt;
        h = ht;
        return c;
      }
    }
    if (least_rise <= 1e-10 * (1.0 + std::abs(h))) return c0;
    throw SolverError(std::string("RPCA: ") + name +
                          " step found no descent after " +
                          std::to_string(opts.max_backtracks) + " backtracks",
                      Vector(), theta);
  };

  for (int it = 0; it < opts.max_iter; ++it) {
    RpcaTraceRow row;
    row.iter = it + 1;
    const double lrho = pen->curvature_bound(theta);

    {
      const Matrix psi = derivative(*pen, R, theta);
      const double vn = spectral_norm(V);
      const double c0 = opts.gamma * std::max(lrho * vn * vn, 1e-12);
      row.c_u = factor_step(U, V * psi.transpose(), c0,
                            [&](const Matrix& Ut) { return residual(problem, Ut, V); },
                            "U");
    }
    {
      const Matrix psi = derivative(*pen, R, theta);
      const double un = spectral_norm(U);
      const double c0 = opts.gamma * std::max(lrho * un * un, 1e-12);
      row.c_v = factor_step(V, U * psi, c0,
                            [&](const Matrix& Vt) { return residual(problem, U, Vt); },
                            "V");
    }

    if (!opts.freeze_theta) {
      const Vector g = theta_gradient_sum(*pen, R, theta);
      double d = opts.gamma *
                 std::max(power_iteration(theta_hessian_sum(*pen, R, theta)),
                          1e-4 * w);
      const double base = h + w * log_nc;
      double least_rise = kInf;
      bool accepted = false;
      for (int bt = 0; bt <= opts.max_backtracks; ++bt, d *= grow) {
        Vector trial;
        try {
          trial = prox_r2(theta - g / d, 1.0 / d, model, domain, w, opts.prox);
        } catch (const SolverError& e) {
          throw SolverError(std::string("RPCA: theta prox failed: ") + e.what(),
                            Vector(), theta);
        }
        const Vector dt = trial - theta;
        const double ht = penalty_sum(*pen, R, trial);
        const double lt = model.log_nc(trial);
        least_rise = std::min(least_rise, ht + w * lt - base);
        const bool lemma =
            ht <= h + g.dot(dt) + 0.5 * d * dt.squaredNorm() + rel_slack(h);
        if (lemma && ht + w * lt <= base + rel_slack(base)) {
          theta = trial;
          h = ht;
          log_nc = lt;
          accepted = true;
          break;
        }
      }
      if (!accepted && !(least_rise <= 1e-10 * (1.0 + std::abs(base)))) {
        throw SolverError("RPCA: theta step found no descent", Vector(), theta);
      }
      row.d = d;
      if (theta.minCoeff() <= 1e-8) {
        row.floor_hit = true;
        const std::string which = theta[0] <= 1e-8 ? "kappa" : "sigma";
        if (res.warnings.empty() || res.warnings.back().find(which) == std::string::npos) {
          res.warnings.push_back("iteration " + std::to_string(it + 1) + ": " +
                                 which + " reached the positivity floor");
        }
      }
    }

    const double F_new = h + w * log_nc;
    row.objective = F_new;
    row.kappa = theta[0];
    row.sigma = theta[1];
    res.trace.push_back(row);
    res.iterations = it + 1;
    const double change = std::abs(F - F_new);
    F = F_new;
    if (change <= opts.rel_tol * std::max(1.0, std::abs(F))) {
      res.converged = true;
      break;
    }
  }

  res.U = U;
  res.V = V;
  res.theta_final = theta;
  res.background = U.transpose() * V;
  res.foreground = problem.Y - res.background;
  const double thresh = opts.mask_mads * median_absolute_deviation(res.foreground);
  res.mask = (res.foreground.array().abs() > thresh).cast<std::uint8_t>();
  return res;
}

SyntheticRpca generate_rpca(const SyntheticRpcaSpec& spec) {
  if (spec.rows < 1 || spec.cols < 1 || spec.rank < 1 ||
      spec.rank > std::min(spec.rows, spec.cols)) {
    throw InputError("synthetic RPCA: invalid shape or rank");
  }
  if (!(spec.spike_fraction >= 0.0 && spec.spike_fraction <= 1.0)) {
    throw InputError("synthetic RPCA: spike fraction must lie in [0, 1]");
  }
  RngCursor fac(spec.seed, 0), pick(spec.seed, 1), noise(spec.seed, 2);
  Matrix U0(spec.rank, spec.rows), V0(spec.rank, spec.cols);
  for (Eigen::Index i = 0; i < U0.size(); ++i) U0.data()[i] = fac.normal();
  for (Eigen::Index i = 0; i < V0.size(); ++i) V0.data()[i] = fac.normal();

  SyntheticRpca out;
  out.L0 = U0.transpose() * V0;
  out.S0 = Matrix::Zero(spec.rows, spec.cols);
  const auto total = static_cast<std::size_t>(out.L0.size());
  const auto spikes = static_cast<std::size_t>(
      std::llround(spec.spike_fraction * static_cast<double>(total)));
  // Partial Fisher-Yates shuffle selects the spike positions.
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < spikes; ++i) {
    const auto j = i + static_cast<std::size_t>(pick.uniform() *
                                                static_cast<double>(total - i));
    std::swap(idx[i], idx[std::min(j, total - 1)]);
    const double sign = pick.uniform() < 0.5 ? -1.0 : 1.0;
    out.S0.data()[idx[i]] = sign * spec.spike_magnitude;
  }
  Matrix N(spec.rows, spec.cols);
  for (Eigen::Index i = 0; i < N.size(); ++i) N.data()[i] = spec.noise * noise.normal();
  out.Y = out.L0 + out.S0 + N;
  return out;
}

}  // namespace selftune
