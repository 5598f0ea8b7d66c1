#include "selftune/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "selftune/errors.hpp"

namespace selftune {

// ---------------------------------------------------------------------------
// PlqAtom / ShapeDomain

Vector PlqAtom::b_bar(const Vector& theta) const {
  return G.transpose() * theta + b;
}

Vector PlqAtom::c_bar(const Vector& theta) const {
  return H.transpose() * theta + c;
}

void PlqAtom::validate() const {
  const auto ku = B.rows();
  const auto kc = C.cols();
  const auto kt = G.rows();
  if (B.cols() != 1 || b.size() != ku || C.rows() != ku || c.size() != kc ||
      M.rows() != ku || M.cols() != ku || G.cols() != ku || H.rows() != kt ||
      H.cols() != kc) {
    throw std::invalid_argument("PlqAtom: inconsistent block dimensions");
  }
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument("PlqAtom: M is not symmetric");
  }
  if (ku > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(M);
    if (eig.eigenvalues().minCoeff() < -1e-12) {
      throw std::invalid_argument("PlqAtom: M is not positive semidefinite");
    }
  }
}

PlqAtom PlqAtom::scaled(double factor) const {
  // factor * sup_u {...} = sup_v { v'(Br - bbar) - 1/2 v'(M/factor)v : C'v <= factor*cbar }
  PlqAtom out = *this;
  out.M = M / factor;
  out.c = c * factor;
  out.H = H * factor;
  return out;
}

PlqAtom PlqAtom::pinned(const Vector& theta) const {
  PlqAtom out = *this;
  out.b = b_bar(theta);
  out.c = c_bar(theta);
  out.G = Matrix::Zero(0, dual_dim());
  out.H = Matrix::Zero(0, constraint_dim());
  return out;
}

Vector ShapeDomain::slack(const Vector& theta) const {
  return s - S.transpose() * theta;
}

bool ShapeDomain::strictly_contains(const Vector& theta) const {
  if (theta.size() != shape_dim()) return false;
  if (num_constraints() == 0) return true;
  return (slack(theta).array() > 0.0).all();
}

double ShapeDomain::max_step(const Vector& theta, const Vector& dir,
                             double fraction) const {
  double alpha = 1.0;
  if (num_constraints() == 0) return alpha;
  const Vector sl = slack(theta);
  const Vector rate = S.transpose() * dir;
  for (Eigen::Index j = 0; j < sl.size(); ++j) {
    if (rate[j] > 0.0) alpha = std::min(alpha, fraction * sl[j] / rate[j]);
  }
  return alpha;
}

ShapeDomain ShapeDomain::lower_bounds(const Vector& lower,
                                      const Vector& interior) {
  const auto k = lower.size();
  return ShapeDomain{-Matrix::Identity(k, k), -lower, interior};
}

ShapeDomain ShapeDomain::empty() {
  return ShapeDomain{Matrix::Zero(0, 0), Vector::Zero(0), Vector::Zero(0)};
}

// ---------------------------------------------------------------------------
// Penalty defaults

double Penalty::derivative_r(double, const Vector&) const {
  throw UnsupportedError("penalty '" + std::string(key()) +
                         "' is not differentiable in r: gradient unavailable; "
                         "use IP solver");
}

double Penalty::curvature_bound(const Vector&) const {
  throw UnsupportedError("penalty '" + std::string(key()) +
                         "' has no bounded curvature in r");
}

void Penalty::check_domain(const Vector& theta) const {
  const auto names = parameter_names();
  if (theta.size() != static_cast<Eigen::Index>(names.size())) {
    std::ostringstream os;
    os << "penalty '" << key() << "' expects " << names.size()
       << " shape parameters, got " << theta.size();
    throw DomainError(os.str(), "");
  }
  if (!theta.allFinite()) {
    throw DomainError("non-finite shape parameter", "");
  }
  const ShapeDomain dom = domain();
  if (dom.num_constraints() == 0) return;
  const Vector sl = dom.slack(theta);
  for (Eigen::Index j = 0; j < sl.size(); ++j) {
    if (sl[j] > 0.0) continue;
    std::string name;
    for (Eigen::Index i = 0; i < dom.S.rows(); ++i) {
      if (dom.S(i, j) != 0.0) {
        name = names[i];
        break;
      }
    }
    std::ostringstream os;
    os << "shape parameter '" << name << "' of penalty '" << key()
       << "' violates domain constraint " << j << " (slack " << sl[j] << ")";
    throw DomainError(os.str(), name);
  }
}

namespace {

double sign(double r) { return (r > 0.0) - (r < 0.0); }

Matrix row(std::initializer_list<double> values) {
  Matrix m(1, values.size());
  Eigen::Index j = 0;
  for (double v : values) m(0, j++) = v;
  return m;
}

Vector vec(std::initializer_list<double> values) {
  Vector v(values.size());
  Eigen::Index j = 0;
  for (double x : values) v[j++] = x;
  return v;
}

ShapeDomain nonnegative(int k, double interior = 1.0) {
  return ShapeDomain::lower_bounds(Vector::Zero(k),
                                   Vector::Constant(k, interior));
}

Matrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

// Dual interval [-lo, hi] for a scalar u: constraints u <= hi, -u <= lo.
Matrix interval_C() { return row({1.0, -1.0}); }

// ---------------------------------------------------------------------------

class L2 final : public Penalty {
 public:
  std::string_view key() const override { return "l2"; }
  std::vector<std::string> parameter_names() const override { return {}; }
  ShapeDomain domain() const override { return ShapeDomain::empty(); }
  bool smooth() const override { return true; }
  double value(double r, const Vector&) const override { return 0.5 * r * r; }
  double derivative_r(double r, const Vector&) const override { return r; }
  Vector theta_gradient(double, const Vector&) const override {
    return Vector::Zero(0);
  }
  Matrix theta_hessian(double, const Vector&) const override {
    return Matrix::Zero(0, 0);
  }
  double curvature_bound(const Vector&) const override { return 1.0; }
  std::vector<double> breakpoints(const Vector&) const override { return {}; }
  TailInfo tails(const Vector&) const override { return {}; }
  std::optional<PlqAtom> atom() const override {
    return PlqAtom{Matrix::Ones(1, 1), Vector::Zero(1), Matrix::Zero(1, 0),
                   Vector::Zero(0),    Matrix::Ones(1, 1), Matrix::Zero(0, 1),
                   Matrix::Zero(0, 0)};
  }
};

class Quantile final : public Penalty {
 public:
  std::string_view key() const override { return "quantile"; }
  std::vector<std::string> parameter_names() const override { return {"tau"}; }
  ShapeDomain domain() const override {
    return ShapeDomain{row({1.0, -1.0}), vec({1.0, 0.0}), vec({0.5})};
  }
  bool smooth() const override { return false; }
  double value(double r, const Vector& t) const override {
    return r >= 0.0 ? (1.0 - t[0]) * r : -t[0] * r;
  }
  Vector theta_gradient(double r, const Vector&) const override {
    return vec({-r});
  }
  Matrix theta_hessian(double, const Vector&) const override {
    return Matrix::Zero(1, 1);
  }
  std::vector<double> breakpoints(const Vector&) const override { return {0.0}; }
  TailInfo tails(const Vector& t) const override {
    return {TailKind::exact_linear, t[0], 1.0 - t[0]};
  }
  std::optional<PlqAtom> atom() const override {
    // u in [-tau, 1 - tau]: c + H'tau = [1 - tau, tau].
    return PlqAtom{Matrix::Ones(1, 1), Vector::Zero(1), interval_C(),
                   vec({1.0, 0.0}),    Matrix::Zero(1, 1), Matrix::Zero(1, 1),
                   row({-1.0, 1.0})};
  }
};

class Hinge final : public Penalty {
 public:
  std::string_view key() const override { return "hinge"; }
  std::vector<std::string> parameter_names() const override {
    return {"epsilon"};
  }
  ShapeDomain domain() const override {
    return ShapeDomain::lower_bounds(vec({0.0}), vec({0.5}));
  }
  bool smooth() const override { return false; }
  bool integrable() const override { return false; }
  double value(double r, const Vector& t) const override {
    return std::max(0.0, r - t[0]);
  }
  Vector theta_gradient(double r, const Vector& t) const override {
    return vec({r > t[0] ? -1.0 : 0.0});
  }
  Matrix theta_hessian(double, const Vector&) const override {
    return Matrix::Zero(1, 1);
  }
  std::vector<double> breakpoints(const Vector& t) const override {
    return {t[0]};
  }
  TailInfo tails(const Vector&) const override {
    return {TailKind::exact_linear, 0.0, 1.0};
  }
  std::optional<PlqAtom> atom() const override {
    // sup_{u in [0,1]} u (r - epsilon)
    return PlqAtom{Matrix::Ones(1, 1), Vector::Zero(1), interval_C(),
                   vec({1.0, 0.0}),    Matrix::Zero(1, 1), Matrix::Ones(1, 1),
                   Matrix::Zero(1, 2)};
  }
};

class Huber final : public Penalty {
 public:
  std::string_view key() const override { return "huber"; }
  std::vector<std::string> parameter_names() const override {
    return {"kappa"};
  }
  ShapeDomain domain() const override { return nonnegative(1); }
  bool smooth() const override { return true; }
  double value(double r, const Vector& t) const override {
    const double k = t[0];
    const double a = std::abs(r);
    return a <= k ? 0.5 * r * r : k * a - 0.5 * k * k;
  }
  double derivative_r(double r, const Vector& t) const override {
    return std::clamp(r, -t[0], t[0]);
  }
  Vector theta_gradient(double r, const Vector& t) const override {
    const double a = std::abs(r);
    return vec({a <= t[0] ? 0.0 : a - t[0]});
  }
  Matrix theta_hessian(double r, const Vector& t) const override {
    return Matrix::Constant(1, 1, std::abs(r) <= t[0] ? 0.0 : -1.0);
  }
  double curvature_bound(const Vector&) const override { return 1.0; }
  std::vector<double> breakpoints(const Vector& t) const override {
    return {-t[0], t[0]};
  }
  TailInfo tails(const Vector& t) const override {
    return {TailKind::exact_linear, t[0], t[0]};
  }
  std::optional<PlqAtom> atom() const override {
    return PlqAtom{Matrix::Ones(1, 1), Vector::Zero(1), interval_C(),
                   Vector::Zero(2),    Matrix::Ones(1, 1), Matrix::Zero(1, 1),
                   row({1.0, 1.0})};
  }
};

class QuantileHuber final : public Penalty {
 public:
  std::string_view key() const override { return "quantile_huber"; }
  std::vector<std::string> parameter_names() const override {
    return {"theta1", "theta2"};
  }
  ShapeDomain domain() const override { return nonnegative(2); }
  bool smooth() const override { return true; }
  double value(double r, const Vector& t) const override {
    if (r < -t[0]) return -t[0] * r - 0.5 * t[0] * t[0];
    if (r > t[1]) return t[1] * r - 0.5 * t[1] * t[1];
    return 0.5 * r * r;
  }
  double derivative_r(double r, const Vector& t) const override {
    return std::clamp(r, -t[0], t[1]);
  }
  Vector theta_gradient(double r, const Vector& t) const override {
    if (r < -t[0]) return vec({-r - t[0], 0.0});
    if (r > t[1]) return vec({0.0, r - t[1]});
    return Vector::Zero(2);
  }
  Matrix theta_hessian(double r, const Vector& t) const override {
    if (r < -t[0]) return diag2(-1.0, 0.0);
    if (r > t[1]) return diag2(0.0, -1.0);
    return Matrix::Zero(2, 2);
  }
  double curvature_bound(const Vector&) const override { return 1.0; }
  std::vector<double> breakpoints(const Vector& t) const override {
    return {-t[0], t[1]};
  }
  TailInfo tails(const Vector& t) const override {
    return {TailKind::exact_linear, t[0], t[1]};
  }
  std::optional<PlqAtom> atom() const override {
    // u in [-theta1, theta2]
    Matrix H(2, 2);
    H << 0.0, 1.0, 1.0, 0.0;
    return PlqAtom{Matrix::Ones(1, 1), Vector::Zero(1), interval_C(),
                   Vector::Zero(2),    Matrix::Ones(1, 1), Matrix::Zero(2, 1),
                   H};
  }
};

// rho(r; kappa, sigma) = huber_kappa(r / sigma)
class HuberScaled final : public Penalty {
 public:
  std::string_view key() const override { return "huber_scaled"; }
  std::vector<std::string> parameter_names() const override {
    return {"kappa", "sigma"};
  }
  ShapeDomain domain() const override { return nonnegative(2); }
  bool smooth() const override { return true; }
  double value(double r, const Vector& t) const override {
    const double k = t[0], s = t[1], a = std::abs(r);
    return a <= k * s ? 0.5 * r * r / (s * s) : k * a / s - 0.5 * k * k;
  }
  double derivative_r(double r, const Vector& t) const override {
    const double k = t[0], s = t[1];
    return std::abs(r) <= k * s ? r / (s * s) : k * sign(r) / s;
  }
  Vector theta_gradient(double r, const Vector& t) const override {
    const double k = t[0], s = t[1], a = std::abs(r);
    if (a <= k * s) return vec({0.0, -r * r / (s * s * s)});
    return vec({a / s - k, -k * a / (s * s)});
  }
  Matrix theta_hessian(double r, const Vector& t) const override {
    const double k = t[0], s = t[1], a = std::abs(r);
    Matrix h(2, 2);
    if (a <= k * s) {
      h << 0.0, 0.0, 0.0, 3.0 * r * r / (s * s * s * s);
    } else {
      const double cross = -a / (s * s);
      h << -1.0, cross, cross, 2.0 * k * a / (s * s * s);
    }
    return h;
  }
  double curvature_bound(const Vector& t) const override {
    return 1.0 / (t[1] * t[1]);
  }
  std::vector<double> breakpoints(const Vector& t) const override {
    return {-t[0] * t[1], t[0] * t[1]};
  }
  TailInfo tails(const Vector& t) const override {
    return {TailKind::exact_linear, t[0] / t[1], t[0] / t[1]};
  }
};

// log(1 + r^2/sigma^2) on |r| <= kappa*sigma, continued linearly (C^1) beyond.
class HuberizedT final : public Penalty {
 public:
  std::string_view key() const override { return "huberized_t"; }
  std::vector<std::string> parameter_names() const override {
    return {"kappa", "sigma"};
  }
  ShapeDomain domain() const override { return nonnegative(2); }
  bool smooth() const override { return true; }

  static double slope(double k, double s) {
    return 2.0 * k / (s * (k * k + 1.0));
  }

  double value(double r, const Vector& t) const override {
    const double k = t[0], s = t[1], a = std::abs(r);
    if (a <= k * s) return std::log1p(r * r / (s * s));
    return slope(k, s) * (a - k * s) + std::log1p(k * k);
  }
  double derivative_r(double r, const Vector& t) const override {
    const double k = t[0], s = t[1];
    if (std::abs(r) <= k * s) return 2.0 * r / (s * s + r * r);
    return slope(k, s) * sign(r);
  }
  Vector theta_gradient(double r, const Vector& t) const override {
    const double k = t[0], s = t[1], a = std::abs(r);
    if (a <= k * s) return vec({0.0, -2.0 * r * r / (s * (s * s + r * r))});
    const double k2 = 1.0 + k * k;
    const double slope_k = (2.0 / s) * (1.0 - k * k) / (k2 * k2);
    return vec({slope_k * (a - k * s), -slope(k, s) * a / s});
  }
  Matrix theta_hessian(double r, const Vector& t) const override {
    const double k = t[0], s = t[1], a = std::abs(r);
    Matrix h(2, 2);
    if (a <= k * s) {
      const double den = s * s * s + s * r * r;
      h << 0.0, 0.0, 0.0, 2.0 * r * r * (3.0 * s * s + r * r) / (den * den);
      return h;
    }
    const double k2 = 1.0 + k * k;
    const double slope_k = (2.0 / s) * (1.0 - k * k) / (k2 * k2);
    const double slope_kk = (2.0 / s) * 2.0 * k * (k * k - 3.0) / (k2 * k2 * k2);
    const double cross = -slope_k * a / s;
    h << slope_kk * (a - k * s) - slope_k * s, cross, cross,
        2.0 * slope(k, s) * a / (s * s);
    return h;
  }
  double curvature_bound(const Vector& t) const override {
    return 2.0 / (t[1] * t[1]);
  }
  std::vector<double> breakpoints(const Vector& t) const override {
    return {-t[0] * t[1], t[0] * t[1]};
  }
  TailInfo tails(const Vector& t) const override {
    const double a = slope(t[0], t[1]);
    return {TailKind::exact_linear, a, a};
  }
};

class Vapnik final : public Penalty {
 public:
  std::string_view key() const override { return "vapnik"; }
  std::vector<std::string> parameter_names() const override {
    return {"epsilon"};
  }
  ShapeDomain domain() const override { return nonnegative(1); }
  bool smooth() const override { return false; }
  double value(double r, const Vector& t) const override {
    return std::max(0.0, std::abs(r) - t[0]);
  }
  Vector theta_gradient(double r, const Vector& t) const override {
    return vec({std::abs(r) > t[0] ? -1.0 : 0.0});
  }
  Matrix theta_hessian(double, const Vector&) const override {
    return Matrix::Zero(1, 1);
  }
  std::vector<double> breakpoints(const Vector& t) const override {
    return {-t[0], t[0]};
  }
  TailInfo tails(const Vector&) const override {
    return {TailKind::exact_linear, 1.0, 1.0};
  }
  std::optional<PlqAtom> atom() const override { return box_atom(false); }

  // u in [0,1]^2, B = [1; -1], bbar = [eps; eps].
  static PlqAtom box_atom(bool quadratic) {
    Matrix B(2, 1);
    B << 1.0, -1.0;
    Matrix C(2, 4);
    C << 1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0;
    return PlqAtom{B,
                   Vector::Zero(2),
                   C,
                   vec({1.0, 1.0, 0.0, 0.0}),
                   quadratic ? Matrix(Matrix::Identity(2, 2)) : Matrix(Matrix::Zero(2, 2)),
                   row({1.0, 1.0}),
                   Matrix::Zero(1, 4)};
  }
};

class SmoothInsensitive final : public Penalty {
 public:
  std::string_view key() const override { return "smooth_insensitive"; }
  std::vector<std::string> parameter_names() const override {
    return {"epsilon"};
  }
  ShapeDomain domain() const override { return nonnegative(1, 0.5); }
  bool smooth() const override { return true; }

  // One-sided Huber piece sup_{u in [0,1]} u t - u^2/2 and its derivatives.
  static double piece(double t) {
    if (t <= 0.0) return 0.0;
    return t <= 1.0 ? 0.5 * t * t : t - 0.5;
  }
  static double piece_d(double t) { return std::clamp(t, 0.0, 1.0); }
  static double piece_dd(double t) { return (t >= 0.0 && t <= 1.0) ? 1.0 : 0.0; }

  double value(double r, const Vector& t) const override {
    return piece(r - t[0]) + piece(-r - t[0]);
  }
  double derivative_r(double r, const Vector& t) const override {
    return piece_d(r - t[0]) - piece_d(-r - t[0]);
  }
  Vector theta_gradient(double r, const Vector& t) const override {
    return vec({-piece_d(r - t[0]) - piece_d(-r - t[0])});
  }
  Matrix theta_hessian(double r, const Vector& t) const override {
    return Matrix::Constant(1, 1, piece_dd(r - t[0]) + piece_dd(-r - t[0]));
  }
  double curvature_bound(const Vector&) const override { return 1.0; }
  std::vector<double> breakpoints(const Vector& t) const override {
    return {-1.0 - t[0], -t[0], t[0], 1.0 + t[0]};
  }
  TailInfo tails(const Vector&) const override {
    return {TailKind::exact_linear, 1.0, 1.0};
  }
  std::optional<PlqAtom> atom() const override {
    return Vapnik::box_atom(true);
  }
};

// alpha*|r| + r^2/2
class ElasticNet final : public Penalty {
 public:
  std::string_view key() const override { return "elastic_net"; }
  std::vector<std::string> parameter_names() const override {
    return {"alpha"};
  }
  ShapeDomain domain() const override { return nonnegative(1); }
  bool smooth() const override { return false; }
  double value(double r, const Vector& t) const override {
    return t[0] * std::abs(r) + 0.5 * r * r;
  }
  Vector theta_gradient(double r, const Vector&) const override {
    return vec({std::abs(r)});
  }
  Matrix theta_hessian(double, const Vector&) const override {
    return Matrix::Zero(1, 1);
  }
  std::vector<double> breakpoints(const Vector&) const override { return {0.0}; }
  TailInfo tails(const Vector&) const override { return {}; }
  std::optional<PlqAtom> atom() const override {
    // u1 in [-alpha, alpha] (linear part), u2 free with curvature 1.
    Matrix B(2, 1);
    B << 1.0, 1.0;
    Matrix C(2, 2);
    C << 1.0, -1.0, 0.0, 0.0;
    return PlqAtom{B,   Vector::Zero(2),   C, Vector::Zero(2), diag2(0.0, 1.0),
                   Matrix::Zero(1, 2), row({1.0, 1.0})};
  }
};

// sqrt(1 + r^2/eps^2) - 1
class Hybrid final : public Penalty {
 public:
  std::string_view key() const override { return "hybrid"; }
  std::vector<std::string> parameter_names() const override {
    return {"epsilon"};
  }
  ShapeDomain domain() const override { return nonnegative(1); }
  bool smooth() const override { return true; }
  double value(double r, const Vector& t) const override {
    const double q = r * r / (t[0] * t[0]);
    return q / (std::sqrt(1.0 + q) + 1.0);
  }
  double derivative_r(double r, const Vector& t) const override {
    const double e = t[0];
    return r / (e * e * std::sqrt(1.0 + r * r / (e * e)));
  }
  Vector theta_gradient(double r, const Vector& t) const override {
    const double e = t[0], q = r * r / (e * e);
    return vec({-q / (e * std::sqrt(1.0 + q))});
  }
  Matrix theta_hessian(double r, const Vector& t) const override {
    const double e = t[0], q = r * r / (e * e);
    return Matrix::Constant(
        1, 1, q * (3.0 + 2.0 * q) / (e * e * std::pow(1.0 + q, 1.5)));
  }
  double curvature_bound(const Vector& t) const override {
    return 1.0 / (t[0] * t[0]);
  }
  std::vector<double> breakpoints(const Vector&) const override { return {}; }
  TailInfo tails(const Vector&) const override { return {}; }
};

// log(1 + exp(a r))
class Logistic final : public Penalty {
 public:
  std::string_view key() const override { return "logistic"; }
  std::vector<std::string> parameter_names() const override { return {"a"}; }
  ShapeDomain domain() const override { return nonnegative(1); }
  bool smooth() const override { return true; }
  bool integrable() const override { return false; }
  static double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                    : std::exp(z) / (1.0 + std::exp(z));
  }
  double value(double r, const Vector& t) const override {
    const double z = t[0] * r;
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  }
  double derivative_r(double r, const Vector& t) const override {
    return t[0] * sigmoid(t[0] * r);
  }
  Vector theta_gradient(double r, const Vector& t) const override {
    return vec({r * sigmoid(t[0] * r)});
  }
  Matrix theta_hessian(double r, const Vector& t) const override {
    const double p = sigmoid(t[0] * r);
    return Matrix::Constant(1, 1, r * r * p * (1.0 - p));
  }
  double curvature_bound(const Vector& t) const override {
    return 0.25 * t[0] * t[0];
  }
  std::vector<double> breakpoints(const Vector&) const override { return {}; }
  TailInfo tails(const Vector&) const override { return {}; }
};

}  // namespace

// ---------------------------------------------------------------------------
// Catalog

PenaltyPtr make_penalty(std::string_view key) {
  if (key == "l2") return std::make_shared<L2>();
  if (key == "quantile") return std::make_shared<Quantile>();
  if (key == "hinge") return std::make_shared<Hinge>();
  if (key == "huber") return std::make_shared<Huber>();
  if (key == "quantile_huber") return std::make_shared<QuantileHuber>();
  if (key == "huber_scaled") return std::make_shared<HuberScaled>();
  if (key == "huberized_t") return std::make_shared<HuberizedT>();
  if (key == "vapnik") return std::make_shared<Vapnik>();
  if (key == "smooth_insensitive") return std::make_shared<SmoothInsensitive>();
  if (key == "elastic_net") return std::make_shared<ElasticNet>();
  if (key == "hybrid") return std::make_shared<Hybrid>();
  if (key == "logistic") return std::make_shared<Logistic>();
  throw std::invalid_argument("unknown penalty key '" + std::string(key) + "'");
}

std::vector<std::string> catalog_keys() {
  return {"l2",          "quantile",     "hinge",       "huber",
          "quantile_huber", "vapnik",    "smooth_insensitive", "elastic_net",
          "hybrid",      "logistic",     "huber_scaled", "huberized_t"};
}

std::vector<PenaltyPtr> catalog() {
  std::vector<PenaltyPtr> out;
  for (const auto& k : catalog_keys()) out.push_back(make_penalty(k));
  return out;
}

double eval_primal(const Penalty& penalty, double r, const Vector& theta) {
  penalty.check_domain(theta);
  return penalty.value(r, theta);
}

double grad_r(const Penalty& penalty, double r, const Vector& theta) {
  penalty.check_domain(theta);
  if (!penalty.smooth()) {
    throw UnsupportedError("penalty '" + std::string(penalty.key()) +
                           "' is nonsmooth: gradient unavailable; use IP solver");
  }
  return penalty.derivative_r(r, theta);
}

Vector grad_theta(const Penalty& penalty, double r, const Vector& theta) {
  penalty.check_domain(theta);
  if (!penalty.smooth()) {
    throw UnsupportedError("penalty '" + std::string(penalty.key()) +
                           "' is nonsmooth: gradient unavailable; use IP solver");
  }
  return penalty.theta_gradient(r, theta);
}

Vector quantile_huber_theta(double tau, double kappa) {
  return vec({tau * kappa, (1.0 - tau) * kappa});
}

std::pair<double, double> quantile_huber_tau_kappa(const Vector& theta) {
  const double kappa = theta[0] + theta[1];
  return {theta[0] / kappa, kappa};
}

}  // namespace selftune
