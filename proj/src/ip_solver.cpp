#include "selftune/ip_solver.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "selftune/conjugate.hpp"
#include "selftune/errors.hpp"
#include "selftune/linalg.hpp"

namespace selftune {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Offsets of the six blocks inside the stacked vector z.
struct Layout {
  int d1, q1, q2, u, x, theta, total;
  explicit Layout(const IpProblem& p) {
    d1 = 0;
    q1 = p.k_s();
    q2 = 2 * p.k_s();
    u = q2 + p.m() * p.k_c();
    x = u + p.m() * p.k_u();
    theta = x + p.n();
    total = theta + p.k_theta();
  }
};

/// Gradient and Hessian of m log n_c, or empty blocks without shape parameters.
LogNcDerivatives scaled_log_nc(const IpProblem& problem, const Vector& theta,
                               int order) {
  LogNcDerivatives out;
  const int k = problem.k_theta();
  if (k == 0 || problem.normalization() == nullptr) {
    out.gradient = Vector::Zero(k);
    out.hessian = Matrix::Zero(k, k);
    return out;
  }
  out = problem.normalization()->evaluate(theta, order);
  out.value *= problem.m();
  if (order >= 1) out.gradient *= problem.m();
  if (order >= 2) out.hessian *= problem.m();
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// IpProblem

IpProblem IpProblem::self_tuning(Matrix A, Vector y, PenaltyPtr penalty,
                                 double nc_tol) {
  const auto atom = penalty->atom();
  if (!atom) {
    throw UnsupportedError("penalty '" + std::string(penalty->key()) +
                           "' has no PLQ representation; use the PALM solver");
  }
  if (!penalty->integrable()) {
    throw DivergenceError("penalty '" + std::string(penalty->key()) +
                              "' does not induce a proper density; shape "
                              "parameters cannot be self-tuned",
                          "");
  }
  if (A.rows() != y.size()) {
    throw InputError("A and y have inconsistent row counts");
  }
  IpProblem p;
  p.A_ = std::move(A);
  p.y_ = std::move(y);
  p.atom_ = *atom;
  p.domain_ = penalty->domain();
  p.model_ = std::make_shared<NormalizationModel>(penalty, nc_tol);
  p.penalty_ = std::move(penalty);
  return p;
}

IpProblem IpProblem::fixed_shape(Matrix A, Vector y, PenaltyPtr penalty,
                                 Vector theta, double scale) {
  const auto atom = penalty->atom();
  if (!atom) {
    throw UnsupportedError("penalty '" + std::string(penalty->key()) +
                           "' has no PLQ representation; use the PALM solver");
  }
  if (A.rows() != y.size()) {
    throw InputError("A and y have inconsistent row counts");
  }
  penalty->check_domain(theta);
  IpProblem p;
  p.A_ = std::move(A);
  p.y_ = std::move(y);
  p.atom_ = atom->pinned(theta).scaled(scale);
  p.domain_ = ShapeDomain::empty();
  p.penalty_ = std::move(penalty);
  p.pinned_ = std::move(theta);
  p.scale_ = scale;
  return p;
}

IpProblem IpProblem::custom(Matrix A, Vector y, PlqAtom atom,
                            ShapeDomain domain,
                            std::shared_ptr<const NormalizationModel> model) {
  atom.validate();
  if (A.rows() != y.size()) {
    throw InputError("A and y have inconsistent row counts");
  }
  if (domain.shape_dim() != atom.shape_dim() && domain.num_constraints() > 0) {
    throw std::invalid_argument("domain and atom disagree on k_theta");
  }
  IpProblem p;
  p.A_ = std::move(A);
  p.y_ = std::move(y);
  p.atom_ = std::move(atom);
  p.domain_ = std::move(domain);
  if (p.domain_.num_constraints() == 0) {
    p.domain_.S = Matrix::Zero(p.atom_.shape_dim(), 0);
    if (p.domain_.interior_point.size() != p.atom_.shape_dim()) {
      p.domain_.interior_point = Vector::Zero(p.atom_.shape_dim());
    }
  }
  p.model_ = std::move(model);
  return p;
}

int IpProblem::state_dim() const { return Layout(*this).total; }

Vector IpProblem::effective_theta(const Vector& theta) const {
  return pinned_ ? *pinned_ : theta;
}

double IpProblem::objective(const Vector& x, const Vector& theta) const {
  const Vector r = y_ - A_ * x;
  double total = 0.0;
  if (penalty_) {
    const Vector t = effective_theta(theta);
    for (Eigen::Index i = 0; i < r.size(); ++i) total += penalty_->value(r[i], t);
    total *= scale_;
    if (pinned_) {
      if (scale_ == 1.0 && penalty_->integrable() && t.size() > 0) {
        total += m() * NormalizationModel(penalty_).log_nc(t);
      }
      return total;
    }
  } else {
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      total += eval_conjugate_sup(atom_, r[i], theta);
    }
  }
  if (model_ && k_theta() > 0) total += m() * model_->log_nc(theta);
  return total;
}

// ---------------------------------------------------------------------------
// IpState

Vector IpState::d2(const IpProblem& problem) const {
  const PlqAtom& a = problem.atom();
  const Vector cbar = a.c_bar(theta);
  const int kc = problem.k_c(), ku = problem.k_u();
  Vector out(problem.m() * kc);
  for (int i = 0; i < problem.m(); ++i) {
    out.segment(i * kc, kc) = cbar - a.C.transpose() * u.segment(i * ku, ku);
  }
  return out;
}

Vector IpState::pack() const {
  Vector z(d1.size() + q1.size() + q2.size() + u.size() + x.size() +
           theta.size());
  z << d1, q1, q2, u, x, theta;
  return z;
}

IpState IpState::unpack(const Vector& z, const IpProblem& problem, double mu) {
  const Layout L(problem);
  if (z.size() != L.total) {
    throw std::invalid_argument("IpState::unpack: wrong vector length");
  }
  IpState s;
  s.d1 = z.segment(L.d1, L.q1 - L.d1);
  s.q1 = z.segment(L.q1, L.q2 - L.q1);
  s.q2 = z.segment(L.q2, L.u - L.q2);
  s.u = z.segment(L.u, L.x - L.u);
  s.x = z.segment(L.x, L.theta - L.x);
  s.theta = z.segment(L.theta, L.total - L.theta);
  s.mu = mu;
  return s;
}

bool IpState::strictly_feasible(const IpProblem& problem) const {
  const auto positive = [](const Vector& v) { return (v.array() > 0.0).all(); };
  if (!positive(d1) || !positive(q1) || !positive(q2)) return false;
  if (!positive(d2(problem))) return false;
  if (problem.k_s() > 0 && !positive(problem.domain().slack(theta))) return false;
  return true;
}

Vector strictly_feasible_dual(const PlqAtom& atom, const Vector& theta) {
  const Vector cbar = atom.c_bar(theta);
  const int ku = atom.dual_dim();
  const auto strictly = [&](const Vector& u) {
    return (cbar - atom.C.transpose() * u).minCoeff() > 0.0;
  };
  Vector zero = Vector::Zero(ku);
  if (atom.constraint_dim() == 0 || strictly(zero)) return zero;
  if (ku > 2) {
    throw std::invalid_argument("strictly_feasible_dual supports k_u <= 2");
  }
  // Average the vertices of {u : C'u <= cbar}; for a bounded polytope with
  // nonempty interior the centroid of its vertices is strictly inside.
  const Matrix Ct = atom.C.transpose();
  const double tol = 1e-12 * (1.0 + cbar.cwiseAbs().maxCoeff());
  Vector sum = Vector::Zero(ku);
  int count = 0;
  const int kc = atom.constraint_dim();
  auto feasible = [&](const Vector& u) {
    return ((Ct * u - cbar).array() <= tol).all();
  };
  if (ku == 1) {
    for (int j = 0; j < kc; ++j) {
      if (Ct(j, 0) == 0.0) continue;
      Vector u = Vector::Constant(1, cbar[j] / Ct(j, 0));
      if (feasible(u)) {
        sum += u;
        ++count;
      }
    }
  } else {
    for (int j = 0; j < kc; ++j) {
      for (int l = j + 1; l < kc; ++l) {
        Matrix sys(2, 2);
        sys << Ct.row(j), Ct.row(l);
        if (std::abs(sys.determinant()) < 1e-14) continue;
        Vector rhs(2);
        rhs << cbar[j], cbar[l];
        const Vector u = sys.partialPivLu().solve(rhs);
        if (feasible(u)) {
          sum += u;
          ++count;
        }
      }
    }
  }
  if (count > 0) {
    const Vector centroid = sum / count;
    if (strictly(centroid)) return centroid;
  }
  throw std::invalid_argument(
      "dual feasible set has empty interior at this theta");
}

namespace {

/// Per-residual maximizer of u'(B r_i - bbar) - u'Mu/2 + mu sum log(d2), which
/// places blocks 3 and 4 of F_mu exactly on the central path.
Vector centered_dual(const PlqAtom& a, const Vector& theta, double r,
                     double mu, Vector u) {
  const Vector bbar = a.b_bar(theta);
  const Vector cbar = a.c_bar(theta);
  const Vector lin = a.B.col(0) * r - bbar;
  const auto phi = [&](const Vector& v) {
    const Vector d = cbar - a.C.transpose() * v;
    if (d.size() > 0 && !(d.minCoeff() > 0.0)) return -kInf;
    return v.dot(lin) - 0.5 * v.dot(a.M * v) + mu * d.array().log().sum();
  };
  double f = phi(u);
  for (int iter = 0; iter < 100; ++iter) {
    const Vector d = cbar - a.C.transpose() * u;
    const Vector g = lin - a.M * u - mu * a.C * d.cwiseInverse();
    if (g.norm() <= 1e-12 * (1.0 + lin.norm())) break;
    const Matrix negH =
        a.M + mu * a.C * d.array().square().inverse().matrix().asDiagonal() *
                  a.C.transpose();
    const Vector step = negH.ldlt().solve(g);
    double t = 1.0;
    while (t > 1e-14) {
      const double ft = phi(u + t * step);
      if (ft >= f + 1e-4 * t * g.dot(step)) {
        u += t * step;
        f = ft;
        break;
      }
      t *= 0.5;
    }
    if (t <= 1e-14) break;
  }
  return u;
}

}  // namespace

IpState initial_state(const IpProblem& problem, double mu0) {
  IpState s;
  s.mu = mu0;
  s.x = least_squares(problem.A(), problem.y());
  const Vector r = problem.y() - problem.A() * s.x;
  s.theta = problem.k_theta() > 0 ? problem.domain().interior_point
                                  : Vector::Zero(0);
  if (problem.k_theta() > 0 && problem.penalty() &&
      problem.normalization() != nullptr) {
    s.theta = fit_shape_mle(*problem.penalty(), *problem.normalization(),
                            problem.domain(), r, s.theta);
  }
  const PlqAtom& a = problem.atom();
  const Vector u0 = strictly_feasible_dual(a, s.theta);
  const int ku = problem.k_u();
  s.u.resize(problem.m() * ku);
  for (int i = 0; i < problem.m(); ++i) {
    s.u.segment(i * ku, ku) = centered_dual(a, s.theta, r[i], mu0, u0);
  }
  s.d1 = problem.domain().slack(s.theta);
  if (problem.k_s() == 0) s.d1 = Vector::Zero(0);
  s.q1 = mu0 * s.d1.cwiseInverse();
  s.q2 = mu0 * s.d2(problem).cwiseInverse();
  return s;
}

// ---------------------------------------------------------------------------
// KKT system

Vector kkt_residual(const IpState& st, const IpProblem& problem) {
  const Layout L(problem);
  const PlqAtom& a = problem.atom();
  const ShapeDomain& D = problem.domain();
  const int m = problem.m(), ku = problem.k_u(), kc = problem.k_c();
  const int ks = problem.k_s();
  Vector F(L.total);

  F.segment(L.d1, ks) = st.d1.cwiseProduct(st.q1).array() - st.mu;
  if (ks > 0) F.segment(L.q1, ks) = st.d1 + D.S.transpose() * st.theta - D.s;

  const Vector d2 = st.d2(problem);
  F.segment(L.q2, m * kc) = d2.cwiseProduct(st.q2).array() - st.mu;

  const Vector r = problem.y() - problem.A() * st.x;
  const Vector bbar = a.b_bar(st.theta);
  Vector bu(m);
  Vector sum_u = Vector::Zero(ku);
  Vector sum_q2 = Vector::Zero(kc);
  for (int i = 0; i < m; ++i) {
    const auto ui = st.u.segment(i * ku, ku);
    const auto qi = st.q2.segment(i * kc, kc);
    F.segment(L.u + i * ku, ku) = a.B.col(0) * r[i] - bbar - a.M * ui - a.C * qi;
    bu[i] = a.B.col(0).dot(ui);
    sum_u += ui;
    sum_q2 += qi;
  }
  F.segment(L.x, problem.n()) = -problem.A().transpose() * bu;

  if (problem.k_theta() > 0) {
    const auto lnc = scaled_log_nc(problem, st.theta, 1);
    Vector f6 = -a.G * sum_u + lnc.gradient + a.H * sum_q2;
    if (ks > 0) f6 += D.S * st.q1;
    F.segment(L.theta, problem.k_theta()) = f6;
  }
  return F;
}

Vector kkt_jacobian_apply(const IpState& st, const IpProblem& problem,
                          const Vector& v) {
  const Layout L(problem);
  if (v.size() != L.total) {
    throw std::invalid_argument("kkt_jacobian_apply: wrong vector length");
  }
  const PlqAtom& a = problem.atom();
  const ShapeDomain& D = problem.domain();
  const int m = problem.m(), n = problem.n(), ku = problem.k_u();
  const int kc = problem.k_c(), ks = problem.k_s(), kt = problem.k_theta();
  const auto vd1 = v.segment(L.d1, ks);
  const auto vq1 = v.segment(L.q1, ks);
  const auto vq2 = v.segment(L.q2, m * kc);
  const auto vu = v.segment(L.u, m * ku);
  const auto vx = v.segment(L.x, n);
  const Vector vth = v.segment(L.theta, kt);

  Vector out(L.total);
  out.segment(L.d1, ks) = st.q1.cwiseProduct(vd1) + st.d1.cwiseProduct(vq1);
  if (ks > 0) out.segment(L.q1, ks) = vd1 + D.S.transpose() * vth;

  const Vector d2 = st.d2(problem);
  const Vector Hv = a.H.transpose() * vth;
  const Vector Gv = a.G.transpose() * vth;
  const Vector Av = problem.A() * vx;
  Vector bvu(m);
  Vector sum_vu = Vector::Zero(ku);
  Vector sum_vq2 = Vector::Zero(kc);
  for (int i = 0; i < m; ++i) {
    const auto vui = vu.segment(i * ku, ku);
    const auto vqi = vq2.segment(i * kc, kc);
    const Vector dd2 = Hv - a.C.transpose() * vui;
    out.segment(L.q2 + i * kc, kc) =
        d2.segment(i * kc, kc).cwiseProduct(vqi) +
        st.q2.segment(i * kc, kc).cwiseProduct(dd2);
    // The residual is y - A x, so d(B r)/dx v = -B a_i'v.
    out.segment(L.u + i * ku, ku) =
        -a.C * vqi - a.M * vui - a.B.col(0) * Av[i] - Gv;
    bvu[i] = a.B.col(0).dot(vui);
    sum_vu += vui;
    sum_vq2 += vqi;
  }
  out.segment(L.x, n) = -problem.A().transpose() * bvu;
  if (kt > 0) {
    const auto lnc = scaled_log_nc(problem, st.theta, 2);
    Vector j6 = a.H * sum_vq2 - a.G * sum_vu + lnc.hessian * vth;
    if (ks > 0) j6 += D.S * vq1;
    out.segment(L.theta, kt) = j6;
  }
  return out;
}

namespace {

/// How the driver modifies the theta part of the Newton step.
enum class ShapeStep {
  exact,      ///< plain Newton
  convexify,  ///< negative eigenvalues of T5 reflected before the solve
  frozen,     ///< theta held fixed; the theta row of the system is dropped
};

/// Block elimination shared by the exact solve and the driver.
Vector block_solve(const IpState& st, const IpProblem& problem,
                   const Vector& rhs, ShapeStep mode) {
  const Layout L(problem);
  if (rhs.size() != L.total) {
    throw std::invalid_argument("solve_newton_system: wrong vector length");
  }
  const PlqAtom& a = problem.atom();
  const ShapeDomain& D = problem.domain();
  const Matrix& A = problem.A();
  const int m = problem.m(), n = problem.n(), ku = problem.k_u();
  const int kc = problem.k_c(), ks = problem.k_s(), kt = problem.k_theta();
  const Vector r1 = rhs.segment(L.d1, ks);
  const Vector r2 = rhs.segment(L.q1, ks);
  const auto r3 = rhs.segment(L.q2, m * kc);
  const auto r4 = rhs.segment(L.u, m * ku);
  const Vector r5 = rhs.segment(L.x, n);
  const Vector r6 = rhs.segment(L.theta, kt);
  const Vector d2 = st.d2(problem);
  const Vector B = a.B.col(0);

  // Per-residual blocks: T2^{-1} = Q2 D2^{-1}, T3 = -M - C T2^{-1} C',
  // W = -G' + C T2^{-1} H'.
  std::vector<Matrix> T3inv(m);
  std::vector<Matrix> W(m);
  Vector rt4(m * ku);    // r4 + C D2^{-1} r3
  Vector g(m);           // B' T3^{-1} rt4
  Vector beta(m);        // B' T3^{-1} B
  Matrix Gamma(m, kt);   // rows B' T3^{-1} W
  Matrix T5 = Matrix::Zero(kt, kt);
  Vector rhs6 = r6;
  for (int i = 0; i < m; ++i) {
    const Vector t2inv = st.q2.segment(i * kc, kc).cwiseQuotient(d2.segment(i * kc, kc));
    const Vector r3_over_d2 = r3.segment(i * kc, kc).cwiseQuotient(d2.segment(i * kc, kc));
    const Matrix CT = a.C * t2inv.asDiagonal();
    const Matrix negT3 = a.M + CT * a.C.transpose();
    Matrix& inv = T3inv[i];
    if (ku == 1) {
      const double v = negT3(0, 0);
      if (!(v > 1e-300) || !std::isfinite(v)) {
        throw SingularBlockError("T3 block is singular at residual " +
                                     std::to_string(i),
                                 "T3", 1);
      }
      inv = Matrix::Constant(1, 1, -1.0 / v);
    } else {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(negT3);
      const Vector lam = eig.eigenvalues();
      if (!(lam.minCoeff() > 1e-14 * std::max(1.0, lam.maxCoeff()))) {
        throw SingularBlockError("T3 block is singular at residual " +
                                     std::to_string(i),
                                 "T3", 1);
      }
      inv = -(eig.eigenvectors() * lam.cwiseInverse().asDiagonal() *
              eig.eigenvectors().transpose());
    }
    W[i] = -a.G.transpose() + CT * a.H.transpose();
    rt4.segment(i * ku, ku) = r4.segment(i * ku, ku) + a.C * r3_over_d2;
    const Vector T3inv_B = inv * B;
    beta[i] = B.dot(T3inv_B);
    g[i] = T3inv_B.dot(rt4.segment(i * ku, ku));
    if (kt > 0) {
      Gamma.row(i) = T3inv_B.transpose() * W[i];
      T5 -= a.H * t2inv.asDiagonal() * a.H.transpose();
      T5 -= W[i].transpose() * inv * W[i];
      rhs6 -= a.H * r3_over_d2;
      rhs6 -= W[i].transpose() * (inv * rt4.segment(i * ku, ku));
    }
  }

  // T4 = -A'B'T3^{-1}BA = sum_i (-beta_i) a_i a_i'.
  const Vector w = -beta;
  const Matrix T4 = A.transpose() * w.asDiagonal() * A;
  Eigen::LDLT<Matrix> T4f(T4);
  const Vector t4d = T4f.vectorD().cwiseAbs();
  if (T4f.info() != Eigen::Success || !T4.allFinite() ||
      !(t4d.minCoeff() > 1e-14 * std::max(1e-300, t4d.maxCoeff()))) {
    throw SingularBlockError("T4 block is singular (null(BA) is nontrivial)",
                             "T4", 2);
  }
  // The residual derivative carries a minus sign: B A_kkt = -B A.
  const Vector r5hat = r5 + A.transpose() * g;
  const Matrix P = -A.transpose() * Gamma;

  Vector dtheta = Vector::Zero(kt);
  if (kt > 0 && mode != ShapeStep::frozen) {
    const auto lnc = scaled_log_nc(problem, st.theta, 2);
    T5 += lnc.hessian;
    if (ks > 0) {
      const Vector t1inv = st.q1.cwiseQuotient(st.d1);
      T5 += D.S * t1inv.asDiagonal() * D.S.transpose();
      rhs6 -= D.S * (r1 - st.q1.cwiseProduct(r2)).cwiseQuotient(st.d1);
    }
    const Matrix T4invP = T4f.solve(P);
    T5 -= P.transpose() * T4invP;
    rhs6 += T4invP.transpose() * r5hat;
    if (!T5.allFinite()) {
      throw SingularBlockError("T5 block is singular", "T5", 3);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(T5);
    Vector lam = eig.eigenvalues();
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    if (mode == ShapeStep::convexify) lam = lam.cwiseAbs();
    if (!(lam.cwiseAbs().minCoeff() > 1e-14 * scale)) {
      throw SingularBlockError("T5 block is singular", "T5", 3);
    }
    dtheta = eig.eigenvectors() *
             (eig.eigenvectors().transpose() * rhs6).cwiseQuotient(lam);
  }

  const Vector dx = T4f.solve(r5hat + P * dtheta);
  const Vector Adx = A * dx;
  const Vector Hdt = a.H.transpose() * dtheta;

  Vector out(L.total);
  for (int i = 0; i < m; ++i) {
    const Vector dui =
        T3inv[i] * (rt4.segment(i * ku, ku) + B * Adx[i] - W[i] * dtheta);
    out.segment(L.u + i * ku, ku) = dui;
    const Vector num = r3.segment(i * kc, kc) +
                       st.q2.segment(i * kc, kc).cwiseProduct(
                           a.C.transpose() * dui - Hdt);
    out.segment(L.q2 + i * kc, kc) = num.cwiseQuotient(d2.segment(i * kc, kc));
  }
  out.segment(L.x, n) = dx;
  out.segment(L.theta, kt) = dtheta;
  if (ks > 0) {
    const Vector dd1 = r2 - D.S.transpose() * dtheta;
    out.segment(L.d1, ks) = dd1;
    out.segment(L.q1, ks) = (r1 - st.q1.cwiseProduct(dd1)).cwiseQuotient(st.d1);
  }
  return out;
}

}  // namespace

Vector solve_newton_system(const IpState& st, const IpProblem& problem,
                           const Vector& rhs) {
  return block_solve(st, problem, rhs, ShapeStep::exact);
}

// ---------------------------------------------------------------------------
// Line search and driver

namespace {

/// Largest alpha with v - alpha dv > 0 componentwise.
double positivity_limit(const Vector& v, const Vector& dv) {
  double alpha = kInf;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] > 0.0) alpha = std::min(alpha, v[i] / dv[i]);
  }
  return alpha;
}

double mean_complementarity(const IpState& st, const IpProblem& problem) {
  const Vector d2 = st.d2(problem);
  const double total = st.d1.dot(st.q1) + d2.dot(st.q2);
  const auto count = st.d1.size() + d2.size();
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

}  // namespace

namespace {

/// Largest alpha keeping every positive block of z - alpha p positive.
double boundary_step(const IpState& st, const Vector& direction,
                     const IpProblem& problem) {
  const IpState p = IpState::unpack(direction, problem, st.mu);
  double alpha_max = kInf;
  alpha_max = std::min(alpha_max, positivity_limit(st.d1, p.d1));
  alpha_max = std::min(alpha_max, positivity_limit(st.q1, p.q1));
  alpha_max = std::min(alpha_max, positivity_limit(st.q2, p.q2));
  {
    // d2(z - alpha p) = d2 - alpha (H'p_theta - C'p_u).
    IpState shifted = st;
    shifted.u = st.u - p.u;
    shifted.theta = st.theta - p.theta;
    const Vector dd2 = st.d2(problem) - shifted.d2(problem);
    alpha_max = std::min(alpha_max, positivity_limit(st.d2(problem), dd2));
  }
  if (problem.k_s() > 0) {
    // slack(theta - alpha p) = slack + alpha S'p.
    const Vector sl = problem.domain().slack(st.theta);
    const Vector rate = -(problem.domain().S.transpose() * p.theta);
    alpha_max = std::min(alpha_max, positivity_limit(sl, rate));
  }
  return alpha_max;
}

/// ||F_mu||, optionally without the theta rows (used while theta is frozen).
double merit(const IpState& st, const IpProblem& problem, bool skip_theta) {
  const Vector F = kkt_residual(st, problem);
  if (!skip_theta) return F.norm();
  return F.head(F.size() - problem.k_theta()).norm();
}

double search(const IpState& st, const Vector& direction,
              const IpProblem& problem, const IpOptions& opts,
              bool skip_theta) {
  const double alpha_max = boundary_step(st, direction, problem);
  double alpha = std::min(1.0, opts.fraction_to_boundary * alpha_max);

  const double merit0 = merit(st, problem, skip_theta);
  const Vector z = st.pack();
  while (alpha >= opts.min_step) {
    const IpState trial = IpState::unpack(z - alpha * direction, problem, st.mu);
    double value = kInf;
    try {
      value = merit(trial, problem, skip_theta);
    } catch (const DivergenceError&) {
      value = kInf;
    }
    if (std::isfinite(value) && value <= (1.0 - opts.armijo * alpha) * merit0) {
      return alpha;
    }
    alpha *= opts.backtrack;
  }
  throw SolverError("interior-point line search stalled (step below " +
                        std::to_string(opts.min_step) + ")",
                    st.x, st.theta);
}

}  // namespace

double line_search(const IpState& st, const Vector& direction,
                   const IpProblem& problem, const IpOptions& opts) {
  return search(st, direction, problem, opts, false);
}

IpResult ip_solve(const IpProblem& problem, const IpOptions& opts) {
  return ip_solve(problem, initial_state(problem, opts.mu0), opts);
}

IpResult ip_solve(const IpProblem& problem, IpState state,
                  const IpOptions& opts) {
  if (!state.strictly_feasible(problem)) {
    throw std::invalid_argument("ip_solve: starting point is not strictly feasible");
  }
  IpResult result;
  // Without inequality pairs (e.g. l2) there is no barrier to follow.
  if (state.d1.size() + state.q2.size() == 0) state.mu = 0.0;
  for (int iter = 0;; ++iter) {
    IpState zero_mu = state;
    zero_mu.mu = 0.0;
    const double kkt_inf = kkt_residual(zero_mu, problem).lpNorm<Eigen::Infinity>();
    const Vector F = kkt_residual(state, problem);
    IpTraceRow row;
    row.iter = iter;
    row.merit = F.norm();
    row.kkt_inf = kkt_inf;
    row.mu = state.mu;
    row.objective = problem.objective(state.x, state.theta);
    if (kkt_inf <= opts.tol && state.mu <= opts.mu_stop) {
      result.converged = true;
      result.trace.push_back(row);
      break;
    }
    if (iter >= opts.max_iter) {
      result.trace.push_back(row);
      break;
    }
    // While mu is large the barrier distorts the theta landscape, so theta
    // stays at its initial estimate until mu drops to shape_release_mu.
    const bool frozen = problem.k_theta() > 0 && state.mu > opts.shape_release_mu;
    Vector p;
    double alpha = 0.0;
    if (frozen) {
      p = block_solve(state, problem, F, ShapeStep::frozen);
      alpha = search(state, p, problem, opts, true);
    } else {
      try {
        p = block_solve(state, problem, F, ShapeStep::convexify);
        alpha = search(state, p, problem, opts, false);
      } catch (const SolverError&) {
        // The reflected step is not always a descent direction for the
        // merit function; fall back to the plain Newton step.
        p = block_solve(state, problem, F, ShapeStep::exact);
        alpha = search(state, p, problem, opts, false);
      }
    }
    row.alpha = alpha;
    result.trace.push_back(row);
    state = IpState::unpack(state.pack() - alpha * p, problem, state.mu);
    state.mu = std::max(opts.mu_floor, 0.1 * mean_complementarity(state, problem));
    result.iterations = iter + 1;
  }
  result.x = state.x;
  result.theta = problem.effective_theta(state.theta);
  result.state = std::move(state);
  return result;
}

// ---------------------------------------------------------------------------
// Implementability

std::string ImplementabilityReport::summary() const {
  std::ostringstream os;
  auto line = [&](const char* name, const ConditionCheck& c) {
    os << name << ": " << (c.pass ? "pass" : "fail") << " (margin " << c.margin
       << ")\n";
  };
  line("null(M) & null(C') trivial", null_m_ct);
  line("null(BA) trivial", null_ba);
  line("T5 constituents full rank", null_t5);
  line("log n_c strongly concave", strongly_concave);
  os << "implementable: " << (implementable() ? "yes" : "no") << "\n";
  return os.str();
}

ImplementabilityReport check_implementability(const PlqAtom& atom,
                                              const ShapeDomain& domain,
                                              const Matrix& A,
                                              const Vector& theta,
                                              const NormalizationModel* model,
                                              double threshold) {
  ImplementabilityReport rep;
  const int ku = atom.dual_dim(), kc = atom.constraint_dim();
  const int kt = atom.shape_dim();
  const auto min_sv = [](const Matrix& m) {
    if (m.cols() == 0) return kInf;
    if (m.rows() < m.cols()) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues().minCoeff();
  };

  Matrix mc(ku + kc, ku);
  mc << atom.M, atom.C.transpose();
  rep.null_m_ct.margin = min_sv(mc);
  rep.null_m_ct.pass = rep.null_m_ct.margin > threshold;

  // (BA)'(BA) = (B'B) A'A for the replicated scalar atom.
  const double btb = atom.B.squaredNorm();
  if (A.cols() == 0) {
    rep.null_ba.margin = kInf;
  } else if (A.rows() < A.cols()) {
    rep.null_ba.margin = 0.0;
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(A.transpose() * A,
                                              Eigen::EigenvaluesOnly);
    rep.null_ba.margin =
        std::sqrt(std::max(0.0, btb * eig.eigenvalues().minCoeff()));
  }
  rep.null_ba.pass = rep.null_ba.margin > threshold;

  if (kt == 0) {
    rep.null_t5 = {true, kInf};
    rep.strongly_concave = {false, 0.0};
    return rep;
  }
  Matrix hess = Matrix::Zero(kt, kt);
  if (model != nullptr) hess = model->hess_log_nc(theta);
  Vector u0 = Vector::Zero(ku);
  try {
    u0 = strictly_feasible_dual(atom, theta);
  } catch (const std::invalid_argument&) {
  }
  const Vector d2 = atom.c_bar(theta) - atom.C.transpose() * u0;
  const Vector t2inv = d2.array().square().inverse();
  const Matrix W = -atom.G.transpose() + atom.C * t2inv.asDiagonal() * atom.H.transpose();
  const int ks = domain.num_constraints();
  Matrix stacked(kt + ks + kc + ku, kt);
  stacked << hess, (ks > 0 ? Matrix(domain.S.transpose()) : Matrix::Zero(0, kt)),
      atom.H.transpose(), W;
  rep.null_t5.margin = min_sv(stacked);
  rep.null_t5.pass = std::isfinite(rep.null_t5.margin) &&
                     rep.null_t5.margin > threshold;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(hess, Eigen::EigenvaluesOnly);
  rep.strongly_concave.margin = -eig.eigenvalues().maxCoeff();
  rep.strongly_concave.pass = rep.strongly_concave.margin > threshold;
  return rep;
}

}  // namespace selftune
