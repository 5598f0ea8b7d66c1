#include "selftune/conjugate.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "selftune/errors.hpp"

namespace selftune {

namespace {

// Any maximizer with a component this large is taken as evidence of an
// unbounded supremum.
constexpr double kBox = 1e8;

}  // namespace

double eval_conjugate_sup(const PlqAtom& atom, double r, const Vector& theta) {
  atom.validate();
  const int ku = atom.dual_dim();
  if (ku > 2) {
    throw std::invalid_argument(
        "eval_conjugate_sup supports at most two dual variables");
  }
  const Vector g = atom.B.col(0) * r - atom.b_bar(theta);
  const Vector cbar = atom.c_bar(theta);
  if ((cbar.array() < 0.0).any()) {
    throw std::invalid_argument("u = 0 is infeasible for this atom and theta");
  }

  // Constraint normals (columns) and right-hand sides, plus an artificial box.
  const int kc = atom.constraint_dim();
  Matrix normals(ku, kc + 2 * ku);
  Vector rhs(kc + 2 * ku);
  normals.leftCols(kc) = atom.C;
  rhs.head(kc) = cbar;
  for (int i = 0; i < ku; ++i) {
    normals.col(kc + 2 * i) = Vector::Unit(ku, i);
    normals.col(kc + 2 * i + 1) = -Vector::Unit(ku, i);
    rhs[kc + 2 * i] = kBox;
    rhs[kc + 2 * i + 1] = kBox;
  }
  const int total = static_cast<int>(rhs.size());

  auto objective = [&](const Vector& u) {
    return u.dot(g) - 0.5 * u.dot(atom.M * u);
  };
  auto feasible = [&](const Vector& u) {
    const Vector viol = normals.transpose() * u - rhs;
    const double scale = 1.0 + rhs.cwiseAbs().maxCoeff();
    return (viol.array() <= 1e-11 * scale).all();
  };

  double best = -std::numeric_limits<double>::infinity();
  Vector best_u;

  // Stationarity of -u'g + 1/2 u'Mu restricted to the face {N_W'u = rhs_W}:
  //   [ M    N_W ] [u]   [ g    ]
  //   [ N_W'  0  ] [l] = [ rhs_W ]
  auto try_active = [&](const std::vector<int>& active) {
    const int na = static_cast<int>(active.size());
    Matrix K = Matrix::Zero(ku + na, ku + na);
    Vector f(ku + na);
    K.topLeftCorner(ku, ku) = atom.M;
    f.head(ku) = g;
    for (int j = 0; j < na; ++j) {
      K.block(0, ku + j, ku, 1) = normals.col(active[j]);
      K.block(ku + j, 0, 1, ku) = normals.col(active[j]).transpose();
      f[ku + j] = rhs[active[j]];
    }
    Eigen::FullPivLU<Matrix> lu(K);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) return;
    const Vector sol = lu.solve(f);
    const Vector u = sol.head(ku);
    if (!feasible(u)) return;
    const double val = objective(u);
    if (val > best) {
      best = val;
      best_u = u;
    }
  };

  try_active({});
  for (int i = 0; i < total; ++i) {
    try_active({i});
    if (ku == 2) {
      for (int j = i + 1; j < total; ++j) try_active({i, j});
    }
  }
  if (best_u.size() == 0) {
    throw std::logic_error("eval_conjugate_sup: no feasible KKT point found");
  }
  if (best_u.cwiseAbs().maxCoeff() >= 0.5 * kBox) {
    throw DivergenceError("conjugate supremum is unbounded: not integrable at "
                          "this theta",
                          "");
  }
  return best;
}

}  // namespace selftune
