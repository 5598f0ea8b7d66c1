#include <doctest.h>

#include <random>

#include "selftune/conjugate.hpp"
#include "selftune/errors.hpp"
#include "selftune/penalty.hpp"
#include "test_support.hpp"

using namespace selftune;
using selftune::testing::rel_err;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }
Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

/// Random strict-interior theta for each family, kept away from the boundary.
Vector random_theta(const Penalty& p, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  std::uniform_real_distribution<double> pos(0.2, 3.0);
  const std::string key(p.key());
  if (key == "l2") return Vector::Zero(0);
  if (key == "quantile") return v1(unit(gen));
  if (p.num_params() == 1) return v1(pos(gen));
  return v2(pos(gen), pos(gen));
}

/// Brute-force sup over a fine grid of the dual variable for scalar atoms.
double grid_conjugate(const PlqAtom& atom, double r, const Vector& theta) {
  const Vector bbar = atom.b_bar(theta);
  const Vector cbar = atom.c_bar(theta);
  double lo = -1e3, hi = 1e3;
  for (int j = 0; j < atom.constraint_dim(); ++j) {
    const double cj = atom.C(0, j);
    if (cj > 0) hi = std::min(hi, cbar[j] / cj);
    if (cj < 0) lo = std::max(lo, cbar[j] / cj);
  }
  const double slope = atom.B(0, 0) * r - bbar[0];
  const double m = atom.M(0, 0);
  double best = -1e300;
  const int n = 200000;
  for (int i = 0; i <= n; ++i) {
    const double u = lo + (hi - lo) * i / n;
    best = std::max(best, u * slope - 0.5 * m * u * u);
  }
  // Refine around the continuous maximizer when it is interior.
  if (m > 0) {
    const double u = std::clamp(slope / m, lo, hi);
    best = std::max(best, u * slope - 0.5 * m * u * u);
  }
  return best;
}

}  // namespace

TEST_CASE("catalog lists every documented key") {
  const auto keys = catalog_keys();
  CHECK(keys.size() == 12);
  for (const auto& k : keys) CHECK(make_penalty(k)->key() == k);
  CHECK_THROWS_AS(make_penalty("nonexistent"), std::invalid_argument);
}

TEST_CASE("documented primal values") {
  const auto qh = make_penalty("quantile_huber");
  CHECK(eval_primal(*qh, 0.0, v2(0.5, 0.5)) == doctest::Approx(0.0));
  CHECK(eval_primal(*qh, 2.0, v2(0.5, 0.5)) == doctest::Approx(0.875));
  const auto hs = make_penalty("huber_scaled");
  for (auto [k, s] : {std::pair{0.7, 2.0}, std::pair{3.0, 0.1}}) {
    CHECK(eval_primal(*hs, k * s, v2(k, s)) == doctest::Approx(0.5 * k * k));
  }
  const auto q = make_penalty("quantile");
  CHECK(eval_primal(*q, 1.0, v1(0.3)) == doctest::Approx(0.7));
  const auto en = make_penalty("elastic_net");
  CHECK(eval_primal(*en, 1.0, v1(0.5)) == doctest::Approx(1.0));
}

TEST_CASE("documented conjugate values") {
  const auto q = make_penalty("quantile");
  CHECK(eval_conjugate_sup(*q->atom(), 1.0, v1(0.3)) == doctest::Approx(0.7));
  const Vector cbar = q->atom()->c_bar(v1(0.3));
  CHECK(cbar[0] == doctest::Approx(0.7));
  CHECK(cbar[1] == doctest::Approx(0.3));
  const auto en = make_penalty("elastic_net");
  CHECK(eval_conjugate_sup(*en->atom(), 1.0, v1(0.5)) == doctest::Approx(1.0));
  const auto huber = make_penalty("huber");
  // B r - bbar = 0 with M positive definite.
  CHECK(eval_conjugate_sup(*huber->atom(), 0.0, v1(1.3)) == doctest::Approx(0.0));
}

TEST_CASE("scalar atoms agree with a brute-force dual grid") {
  for (const char* key : {"quantile", "huber", "quantile_huber", "l2", "hinge"}) {
    const auto p = make_penalty(key);
    std::mt19937_64 gen(7);
    for (int trial = 0; trial < 20; ++trial) {
      const Vector theta = random_theta(*p, gen);
      const double r = std::uniform_real_distribution<double>(-10, 10)(gen);
      const double grid = grid_conjugate(*p->atom(), r, theta);
      CHECK(std::abs(grid - p->value(r, theta)) <= 1e-6 * (1 + std::abs(grid)));
    }
  }
}

TEST_CASE("primal and conjugate forms agree for every PLQ entry") {
  for (const auto& p : catalog()) {
    const auto atom = p->atom();
    if (!atom) continue;
    CAPTURE(p->key());
    atom->validate();
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> rdist(-10.0, 10.0);
    for (int trial = 0; trial < 200; ++trial) {
      const Vector theta = random_theta(*p, gen);
      const double r = rdist(gen);
      const double primal = eval_primal(*p, r, theta);
      const double dual = eval_conjugate_sup(*atom, r, theta);
      CHECK(std::abs(primal - dual) <= 1e-8 * (1.0 + std::abs(primal)));
      // u = 0 feasible.
      CHECK((atom->c_bar(theta).array() >= 0.0).all());
    }
  }
}

TEST_CASE("catalog atoms satisfy null(M) and null(C') intersect trivially") {
  for (const auto& p : catalog()) {
    const auto atom = p->atom();
    if (!atom) continue;
    CAPTURE(p->key());
    Matrix stacked(atom->M.rows() + atom->C.cols(), atom->dual_dim());
    stacked << atom->M, atom->C.transpose();
    Eigen::JacobiSVD<Matrix> svd(stacked);
    CHECK(svd.singularValues().minCoeff() > 1e-10);
  }
}

TEST_CASE("hybrid and logistic are primal-only entries") {
  CHECK_FALSE(make_penalty("hybrid")->atom().has_value());
  CHECK_FALSE(make_penalty("logistic")->atom().has_value());
  CHECK(make_penalty("quantile")->atom().has_value());
}

TEST_CASE("non-negativity on a dense grid") {
  for (const auto& p : catalog()) {
    CAPTURE(p->key());
    std::mt19937_64 gen(3);
    for (int t = 0; t < 5; ++t) {
      const Vector theta = random_theta(*p, gen);
      for (int i = 0; i < 1000; ++i) {
        const double r = -20.0 + 40.0 * i / 999.0;
        CHECK(p->value(r, theta) >= 0.0);
      }
    }
  }
}

TEST_CASE("breakpoint continuity") {
  for (const auto& p : catalog()) {
    CAPTURE(p->key());
    std::mt19937_64 gen(5);
    const Vector theta = random_theta(*p, gen);
    for (double bp : p->breakpoints(theta)) {
      const double jump =
          std::abs(p->value(bp - 1e-9, theta) - p->value(bp + 1e-9, theta));
      CHECK(jump <= 1e-8);
    }
  }
}

TEST_CASE("smooth entries: derivatives match central differences") {
  for (const auto& p : catalog()) {
    if (!p->smooth()) continue;
    CAPTURE(p->key());
    std::mt19937_64 gen(13);
    std::uniform_real_distribution<double> rdist(-6.0, 6.0);
    for (int trial = 0; trial < 100; ++trial) {
      const Vector theta = random_theta(*p, gen);
      const double r = rdist(gen);
      const double h = 1e-6;
      const double fd_r =
          (p->value(r + h, theta) - p->value(r - h, theta)) / (2 * h);
      CHECK(rel_err(grad_r(*p, r, theta), fd_r) <= 1e-5);
      if (p->num_params() == 0) continue;
      const Vector g = grad_theta(*p, r, theta);
      const Vector fd = selftune::testing::fd_gradient(
          [&](const Vector& t) { return p->value(r, t); }, theta);
      CHECK(selftune::testing::rel_err(g, fd) <= 1e-5);
      // Hessian away from breakpoints, where the a.e. derivative is classical.
      bool near_bp = false;
      for (double bp : p->breakpoints(theta)) near_bp |= std::abs(r - bp) < 1e-3;
      if (near_bp) continue;
      const Matrix hess = p->theta_hessian(r, theta);
      const Matrix fdh = selftune::testing::fd_jacobian(
          [&](const Vector& t) { return p->theta_gradient(r, t); }, theta);
      CHECK((hess - fdh).norm() <= 1e-5 * std::max(1.0, hess.norm()));
    }
  }
}

TEST_CASE("documented gradient values") {
  const auto qh = make_penalty("quantile_huber");
  CHECK(grad_r(*qh, 0.3, v2(0.5, 0.5)) == doctest::Approx(0.3));
  const Vector g = grad_theta(*qh, 3.0, v2(0.5, 0.5));
  CHECK(g[0] == doctest::Approx(0.0));
  CHECK(g[1] == doctest::Approx(2.5));
  const auto ht = make_penalty("huberized_t");
  const Vector gt = grad_theta(*ht, 0.0, v2(2.0, 0.5));
  CHECK(gt.norm() == doctest::Approx(0.0));
}

TEST_CASE("nonsmooth entries refuse gradients") {
  const auto q = make_penalty("quantile");
  CHECK_THROWS_WITH_AS(grad_r(*q, 1.0, v1(0.5)),
                       doctest::Contains("gradient unavailable; use IP solver"),
                       UnsupportedError);
  CHECK_THROWS_AS(grad_theta(*q, 1.0, v1(0.5)), UnsupportedError);
}

TEST_CASE("domain violations name the parameter") {
  const auto qh = make_penalty("quantile_huber");
  try {
    eval_primal(*qh, 1.0, v2(0.5, -1.0));
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(e.parameter() == "theta2");
  }
  const auto q = make_penalty("quantile");
  CHECK_THROWS_AS(eval_primal(*q, 1.0, v1(1.0)), DomainError);
  CHECK_THROWS_AS(eval_primal(*q, 1.0, v2(0.3, 0.3)), DomainError);
}

TEST_CASE("unbounded conjugate is reported") {
  PlqAtom atom = *make_penalty("quantile")->atom();
  atom.C = Matrix::Zero(1, 0);
  atom.c = Vector::Zero(0);
  atom.H = Matrix::Zero(1, 0);
  CHECK_THROWS_WITH_AS(eval_conjugate_sup(atom, 1.0, v1(0.5)),
                       doctest::Contains("not integrable"), DivergenceError);
}

TEST_CASE("scaled and pinned atoms") {
  const auto q = make_penalty("quantile");
  const PlqAtom two = q->atom()->scaled(2.0);
  for (double r : {-3.0, -0.5, 0.0, 1.2}) {
    CHECK(eval_conjugate_sup(two, r, v1(0.5)) == doctest::Approx(std::abs(r)));
  }
  const PlqAtom pinned = q->atom()->pinned(v1(0.2));
  CHECK(pinned.shape_dim() == 0);
  CHECK(eval_conjugate_sup(pinned, 2.0, Vector::Zero(0)) ==
        doctest::Approx(q->value(2.0, v1(0.2))));
}

TEST_CASE("quantile Huber reparametrization round-trips") {
  const Vector t = quantile_huber_theta(0.2, 1.5);
  CHECK(t[0] == doctest::Approx(0.3));
  CHECK(t[1] == doctest::Approx(1.2));
  const auto [tau, kappa] = quantile_huber_tau_kappa(t);
  CHECK(tau == doctest::Approx(0.2));
  CHECK(kappa == doctest::Approx(1.5));
}

TEST_CASE("shape domain step limits") {
  const auto q = make_penalty("quantile");
  const ShapeDomain d = q->domain();
  CHECK(d.strictly_contains(d.interior_point));
  CHECK(d.max_step(v1(0.5), v1(1.0)) == doctest::Approx(0.995 * 0.5));
  CHECK(d.max_step(v1(0.5), v1(0.1)) == doctest::Approx(1.0));
}
