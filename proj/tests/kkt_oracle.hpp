#pragma once

#include <random>
#include <vector>

#include "selftune/ip_solver.hpp"

/// Independent dense oracles for the interior-point KKT system.
namespace selftune::testing {

inline Matrix random_matrix(int r, int c, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  Matrix A(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) A(i, j) = nd(gen);
  return A;
}

inline Vector random_vector(int n, std::mt19937_64& gen, double lo, double hi) {
  std::uniform_real_distribution<double> ud(lo, hi);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = ud(gen);
  return v;
}

/// Random strictly feasible state with positive slacks and duals.
inline IpState random_state(const IpProblem& p, std::mt19937_64& gen) {
  IpState s;
  s.mu = std::uniform_real_distribution<double>(0.01, 1.0)(gen);
  s.theta = p.k_theta() > 0 ? p.domain().interior_point : Vector::Zero(0);
  if (p.k_theta() > 0) {
    // Move inside the domain while keeping strict feasibility.
    Vector trial = s.theta + 0.3 * random_vector(p.k_theta(), gen, -1.0, 1.0)
                                     .cwiseProduct(s.theta.cwiseAbs());
    if (p.domain().strictly_contains(trial)) s.theta = trial;
  }
  const Vector u0 = strictly_feasible_dual(p.atom(), s.theta);
  s.u = u0.replicate(p.m(), 1) + 0.01 * random_vector(p.m() * p.k_u(), gen, -1, 1);
  s.x = random_vector(p.n(), gen, -1, 1);
  s.d1 = random_vector(p.k_s(), gen, 0.1, 2.0);
  s.q1 = random_vector(p.k_s(), gen, 0.1, 2.0);
  s.q2 = random_vector(p.m() * p.k_c(), gen, 0.1, 2.0);
  return s;
}

/// Stacked KKT residual evaluated block by block, with A_kkt = -A and
/// y_kkt = -y.
inline Vector oracle_residual(const IpState& s, const IpProblem& p) {
  const PlqAtom& a = p.atom();
  const ShapeDomain& D = p.domain();
  const int m = p.m(), ku = p.k_u(), kc = p.k_c();
  const Matrix Ak = -p.A();
  const Vector yk = -p.y();
  std::vector<Vector> blocks;
  blocks.push_back((s.d1.array() * s.q1.array() - s.mu).matrix());
  blocks.push_back(p.k_s() > 0 ? Vector(s.d1 + D.S.transpose() * s.theta - D.s)
                               : Vector::Zero(0));
  Vector f3(m * kc), f4(m * ku);
  Vector Btu(m);
  Vector Gu = Vector::Zero(p.k_theta()), Hq = Vector::Zero(p.k_theta());
  for (int i = 0; i < m; ++i) {
    const Vector ui = s.u.segment(i * ku, ku);
    const Vector qi = s.q2.segment(i * kc, kc);
    const Vector d2 = a.c + a.H.transpose() * s.theta - a.C.transpose() * ui;
    f3.segment(i * kc, kc) = (d2.array() * qi.array() - s.mu).matrix();
    const double ri = Ak.row(i).dot(s.x) - yk[i];
    f4.segment(i * ku, ku) =
        a.B.col(0) * ri - a.G.transpose() * s.theta - a.b - a.M * ui - a.C * qi;
    Btu[i] = a.B.col(0).dot(ui);
    Gu += a.G * ui;
    Hq += a.H * qi;
  }
  blocks.push_back(f3);
  blocks.push_back(f4);
  blocks.push_back(Ak.transpose() * Btu);
  Vector f6 = -Gu + Hq;
  if (p.k_theta() > 0) {
    f6 += p.m() * p.normalization()->grad_log_nc(s.theta);
    if (p.k_s() > 0) f6 += D.S * s.q1;
  }
  blocks.push_back(f6);
  Eigen::Index total = 0;
  for (const auto& b : blocks) total += b.size();
  Vector F(total);
  Eigen::Index off = 0;
  for (const auto& b : blocks) {
    F.segment(off, b.size()) = b;
    off += b.size();
  }
  return F;
}

/// Dense assembly of the KKT Jacobian (with the m factor on the log n_c
/// Hessian and A_kkt = -A).
inline Matrix oracle_jacobian(const IpState& s, const IpProblem& p) {
  const PlqAtom& a = p.atom();
  const int m = p.m(), n = p.n(), ku = p.k_u(), kc = p.k_c();
  const int ks = p.k_s(), kt = p.k_theta();
  const int o_d1 = 0, o_q1 = ks, o_q2 = 2 * ks, o_u = o_q2 + m * kc,
            o_x = o_u + m * ku, o_t = o_x + n, N = o_t + kt;
  const Matrix Ak = -p.A();
  Matrix J = Matrix::Zero(N, N);
  for (int j = 0; j < ks; ++j) {
    J(o_d1 + j, o_d1 + j) = s.q1[j];
    J(o_d1 + j, o_q1 + j) = s.d1[j];
    J(o_q1 + j, o_d1 + j) = 1.0;
  }
  if (ks > 0) {
    J.block(o_q1, o_t, ks, kt) = p.domain().S.transpose();
    J.block(o_t, o_q1, kt, ks) = p.domain().S;
  }
  const Vector d2 = s.d2(p);
  for (int i = 0; i < m; ++i) {
    const int r3 = o_q2 + i * kc, r4 = o_u + i * ku;
    const Vector qi = s.q2.segment(i * kc, kc);
    J.block(r3, o_q2 + i * kc, kc, kc) = d2.segment(i * kc, kc).asDiagonal();
    J.block(r3, o_u + i * ku, kc, ku) = -(qi.asDiagonal() * a.C.transpose());
    J.block(r3, o_t, kc, kt) = qi.asDiagonal() * a.H.transpose();
    J.block(r4, o_q2 + i * kc, ku, kc) = -a.C;
    J.block(r4, o_u + i * ku, ku, ku) = -a.M;
    J.block(r4, o_x, ku, n) = a.B * Ak.row(i);
    J.block(r4, o_t, ku, kt) = -a.G.transpose();
    J.block(o_x, o_u + i * ku, n, ku) = Ak.row(i).transpose() * a.B.transpose();
    J.block(o_t, o_q2 + i * kc, kt, kc) = a.H;
    J.block(o_t, o_u + i * ku, kt, ku) = -a.G;
  }
  if (kt > 0) {
    J.block(o_t, o_t, kt, kt) = m * p.normalization()->hess_log_nc(s.theta);
  }
  return J;
}

}  // namespace selftune::testing
