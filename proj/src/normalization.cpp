#include "selftune/normalization.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "selftune/errors.hpp"
#include "selftune/quadrature.hpp"

namespace selftune {

namespace {

// 3-point Gauss-Laguerre rule: exact for int_0^inf e^-t p(t) dt, deg p <= 5.
constexpr std::array<double, 3> kLaguerreNodes = {
    0.415774556783479083311533873128, 2.294280360279041719822050361359,
    6.289945082937479196866415765512};
constexpr std::array<double, 3> kLaguerreWeights = {
    0.711093009929173015449590191143, 0.278517733569240848801444888457,
    0.010389256501586135748964920401};

// Residual window beyond which exp(-rho) is negligible (e^-60) for families
// whose tails are not exactly linear.
constexpr double kTruncationGap = 60.0;

void check_integrable(const Penalty& penalty, const Vector& theta) {
  try {
    penalty.check_domain(theta);
  } catch (const DomainError& e) {
    throw DivergenceError(std::string("n_c diverges: ") + e.what(),
                          e.parameter());
  }
  if (!penalty.integrable()) {
    throw DivergenceError("penalty '" + std::string(penalty.key()) +
                              "' does not induce a proper density",
                          "");
  }
  const TailInfo tails = penalty.tails(theta);
  if (tails.kind == TailKind::exact_linear &&
      !(tails.left_slope > 0.0 && tails.right_slope > 0.0)) {
    throw DivergenceError("n_c diverges: tail slope vanishes at this theta", "");
  }
}

int packed_size(int k) { return k * (k + 1) / 2; }

// int_{-inf}^{x} exp(-t^2/2) dt-type helper: f(t) = e^{-t^2/2}/t +
// sqrt(2pi) (Phi(t) - 1/2), the mass of one half of a unit Huber density.
struct HalfHuber {
  double f, df, ddf;
};

HalfHuber half_huber(double t) {
  const double e = std::exp(-0.5 * t * t);
  const double core = std::sqrt(std::numbers::pi / 2.0) *
                      std::erf(t / std::numbers::sqrt2);
  return {e / t + core, -e / (t * t), e * (1.0 / t + 2.0 / (t * t * t))};
}

}  // namespace

double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

NcIntegrals integrate_nc(const Penalty& penalty, const Vector& theta,
                         int order, double tol, int max_panels) {
  check_integrable(penalty, theta);
  const int k = penalty.num_params();
  const int dim = 1 + (order >= 1 ? k : 0) + (order >= 2 ? packed_size(k) : 0);

  auto integrand = [&](double r, Eigen::Ref<Vector> out) {
    const double e = std::exp(-penalty.value(r, theta));
    out[0] = e;
    if (order == 0 || k == 0) return;
    const Vector g = penalty.theta_gradient(r, theta);
    out.segment(1, k) = -e * g;
    if (order < 2) return;
    const Matrix h = penalty.theta_hessian(r, theta);
    int idx = 1 + k;
    for (int i = 0; i < k; ++i) {
      for (int j = i; j < k; ++j) out[idx++] = e * (g[i] * g[j] - h(i, j));
    }
  };

  std::vector<double> bps = penalty.breakpoints(theta);
  std::sort(bps.begin(), bps.end());
  bps.erase(std::unique(bps.begin(), bps.end()), bps.end());
  const TailInfo tails = penalty.tails(theta);

  Vector total = Vector::Zero(dim);
  Vector scratch(dim);
  std::vector<double> core;

  if (tails.kind == TailKind::exact_linear && !bps.empty()) {
    core = bps;
    // int_b^inf h(r) dr with h = exp(-(a (r - b) + rho_b)) p(r)
    //   = (1/a) sum_i w_i e^{t_i} h(b + t_i / a).
    auto tail = [&](double b, double a, double dir) {
      for (std::size_t i = 0; i < kLaguerreNodes.size(); ++i) {
        const double t = kLaguerreNodes[i];
        integrand(b + dir * t / a, scratch);
        total += (kLaguerreWeights[i] * std::exp(t) / a) * scratch;
      }
    };
    tail(bps.front(), tails.left_slope, -1.0);
    tail(bps.back(), tails.right_slope, 1.0);
  } else {
    double ref = penalty.value(0.0, theta);
    double reach = 1.0;
    for (double b : bps) {
      ref = std::min(ref, penalty.value(b, theta));
      reach = std::max(reach, std::abs(b));
    }
    double lo = -reach, hi = reach;
    while (penalty.value(lo, theta) - ref < kTruncationGap) lo *= 2.0;
    while (penalty.value(hi, theta) - ref < kTruncationGap) hi *= 2.0;
    core.push_back(lo);
    for (double b : bps) core.push_back(b);
    core.push_back(hi);
  }

  double error = 0.0;
  if (core.size() >= 2 && core.back() > core.front()) {
    QuadratureOptions opts;
    opts.rel_tol = tol;
    opts.max_panels = max_panels;
    const auto res = integrate_adaptive(integrand, dim, core, opts);
    total += res.value;
    error = res.error[0];
    if (!res.converged) {
      throw ToleranceError("n_c quadrature did not meet tolerance within the "
                           "panel budget",
                           total[0], error);
    }
  }

  NcIntegrals out;
  out.value = total[0];
  out.error = error;
  if (order >= 1) out.gradient = total.segment(1, k);
  if (order >= 2) {
    out.hessian.resize(k, k);
    int idx = 1 + k;
    for (int i = 0; i < k; ++i) {
      for (int j = i; j < k; ++j) {
        out.hessian(i, j) = out.hessian(j, i) = total[idx++];
      }
    }
  }
  return out;
}

NcQuadrature quadrature_nc(const Penalty& penalty, const Vector& theta,
                           double tol) {
  const auto res = integrate_nc(penalty, theta, 0, tol);
  return {res.value, res.error};
}

// ---------------------------------------------------------------------------

bool NormalizationModel::has_closed_form(std::string_view key) {
  return key == "l2" || key == "quantile" || key == "huber" ||
         key == "quantile_huber" || key == "huber_scaled" || key == "vapnik";
}

NormalizationModel::NormalizationModel(PenaltyPtr penalty, double tol)
    : penalty_(std::move(penalty)),
      mode_(has_closed_form(penalty_->key()) ? NormalizationMode::closed_form
                                             : NormalizationMode::quadrature),
      tol_(tol) {}

NormalizationModel::NormalizationModel(PenaltyPtr penalty,
                                       NormalizationMode mode, double tol)
    : penalty_(std::move(penalty)), mode_(mode), tol_(tol) {
  if (mode_ == NormalizationMode::closed_form &&
      !has_closed_form(penalty_->key())) {
    throw std::invalid_argument("no closed-form normalization for penalty '" +
                                std::string(penalty_->key()) + "'");
  }
}

double NormalizationModel::log_nc(const Vector& theta) const {
  return evaluate(theta, 0).value;
}

Vector NormalizationModel::grad_log_nc(const Vector& theta) const {
  return evaluate(theta, 1).gradient;
}

Matrix NormalizationModel::hess_log_nc(const Vector& theta) const {
  return evaluate(theta, 2).hessian;
}

LogNcDerivatives NormalizationModel::evaluate(const Vector& theta,
                                              int order) const {
  if (mode_ == NormalizationMode::closed_form) return closed_form(theta, order);
  const NcIntegrals nc = integrate_nc(*penalty_, theta, order, tol_);
  LogNcDerivatives out;
  out.value = std::log(nc.value);
  if (order >= 1) out.gradient = nc.gradient / nc.value;
  if (order >= 2) {
    out.hessian = nc.hessian / nc.value -
                  out.gradient * out.gradient.transpose();
  }
  return out;
}

LogNcDerivatives NormalizationModel::closed_form(const Vector& theta,
                                                 int order) const {
  check_integrable(*penalty_, theta);
  const std::string_view key = penalty_->key();
  const int k = penalty_->num_params();
  // Work with n, n', n'' and convert to log at the end.
  double n = 0.0;
  Vector dn = Vector::Zero(k);
  Matrix ddn = Matrix::Zero(k, k);

  if (key == "l2") {
    n = std::sqrt(2.0 * std::numbers::pi);
  } else if (key == "quantile") {
    const double t = theta[0], u = 1.0 - t;
    n = 1.0 / t + 1.0 / u;
    dn[0] = -1.0 / (t * t) + 1.0 / (u * u);
    ddn(0, 0) = 2.0 / (t * t * t) + 2.0 / (u * u * u);
  } else if (key == "huber") {
    const HalfHuber h = half_huber(theta[0]);
    n = 2.0 * h.f;
    dn[0] = 2.0 * h.df;
    ddn(0, 0) = 2.0 * h.ddf;
  } else if (key == "quantile_huber") {
    const HalfHuber a = half_huber(theta[0]);
    const HalfHuber b = half_huber(theta[1]);
    n = a.f + b.f;
    dn << a.df, b.df;
    ddn(0, 0) = a.ddf;
    ddn(1, 1) = b.ddf;
  } else if (key == "huber_scaled") {
    // n = 2 sigma f(kappa); handled directly in log form below.
    const HalfHuber h = half_huber(theta[0]);
    const double s = theta[1];
    LogNcDerivatives out;
    out.value = std::log(2.0 * s * h.f);
    if (order >= 1) {
      out.gradient.resize(2);
      out.gradient << h.df / h.f, 1.0 / s;
    }
    if (order >= 2) {
      const double g = h.df / h.f;
      out.hessian = Matrix::Zero(2, 2);
      out.hessian(0, 0) = h.ddf / h.f - g * g;
      out.hessian(1, 1) = -1.0 / (s * s);
    }
    return out;
  } else if (key == "vapnik") {
    n = 2.0 * theta[0] + 2.0;
    dn[0] = 2.0;
  }

  LogNcDerivatives out;
  out.value = std::log(n);
  if (order >= 1) out.gradient = dn / n;
  if (order >= 2) out.hessian = ddn / n - out.gradient * out.gradient.transpose();
  return out;
}

Vector fit_shape_mle(const Penalty& pen, const NormalizationModel& model,
                     const ShapeDomain& D, const Vector& r, Vector theta,
                     int max_iter) {
  const double m = static_cast<double>(r.size());
  const auto value = [&](const Vector& t) {
    double f = 0.0;
    try {
      f = m * model.log_nc(t);
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
    for (Eigen::Index i = 0; i < r.size(); ++i) f += pen.value(r[i], t);
    return f;
  };
  double f = value(theta);
  for (int iter = 0; iter < max_iter && std::isfinite(f); ++iter) {
    LogNcDerivatives lnc;
    try {
      lnc = model.evaluate(theta, 2);
    } catch (const Error&) {
      break;
    }
    Vector g = m * lnc.gradient;
    Matrix H = m * lnc.hessian;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      g += pen.theta_gradient(r[i], theta);
      H += pen.theta_hessian(r[i], theta);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(H);
    const Vector lam = eig.eigenvalues().cwiseAbs().cwiseMax(
        1e-8 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff()));
    const Vector dir = -(eig.eigenvectors() *
                         (eig.eigenvectors().transpose() * g).cwiseQuotient(lam));
    const double slope = g.dot(dir);
    if (!(slope < 0.0) || -slope <= 1e-12 * (1.0 + std::abs(f))) break;
    double alpha = D.num_constraints() > 0 ? D.max_step(theta, dir) : 1.0;
    bool accepted = false;
    while (alpha > 1e-10) {
      const Vector trial = theta + alpha * dir;
      const double ft = value(trial);
      if (ft <= f + 1e-4 * alpha * slope) {
        theta = trial;
        f = ft;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
  }
  return theta;
}

}  // namespace selftune
