#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "selftune/errors.hpp"
#include "selftune/normalization.hpp"
#include "selftune/quadrature.hpp"
#include "test_support.hpp"

using namespace selftune;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }
Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

// Simpson's rule on 1e6 points over [-24, 24] plus analytic linear tails;
// log n_c for huberized_t at kappa = 8, sigma = 0.1.
constexpr double kHuberizedTNc = 0.30178826644962703;

}  // namespace

TEST_CASE("Gauss-Kronrod integrates smooth functions exactly") {
  CHECK(integrate([](double x) { return x * x * x * x; }, 0.0, 2.0) ==
        doctest::Approx(32.0 / 5.0).epsilon(1e-14));
  CHECK(integrate([](double x) { return std::exp(-x * x); }, -8.0, 8.0) ==
        doctest::Approx(std::sqrt(std::numbers::pi)).epsilon(1e-13));
  CHECK(integrate([](double x) { return 1.0 / (1.0 + x * x); }, -1.0, 1.0) ==
        doctest::Approx(std::numbers::pi / 2).epsilon(1e-13));
}

TEST_CASE("documented log n_c values") {
  NormalizationModel quant(make_penalty("quantile"));
  CHECK(quant.mode() == NormalizationMode::closed_form);
  CHECK(quant.log_nc(v1(0.5)) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(quant.log_nc(v1(0.9)) ==
        doctest::Approx(std::log(1 / 0.9 + 1 / 0.1)).epsilon(1e-14));
  CHECK(quant.grad_log_nc(v1(0.5))[0] == doctest::Approx(0.0));
  CHECK(quant.grad_log_nc(v1(0.3))[0] == doctest::Approx(-1.9048).epsilon(1e-4));

  NormalizationModel qh(make_penalty("quantile_huber"));
  const Vector g = qh.grad_log_nc(v2(1.0, 1.0));
  CHECK(g[0] == doctest::Approx(g[1]).epsilon(1e-14));
}

TEST_CASE("documented quadrature values") {
  const auto l2 = quadrature_nc(*make_penalty("l2"), Vector::Zero(0));
  CHECK(l2.value == doctest::Approx(std::sqrt(2 * std::numbers::pi)).epsilon(1e-10));
  const auto q = quadrature_nc(*make_penalty("quantile"), v1(0.5));
  CHECK(q.value == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(q.error_estimate <= 1e-10 * q.value);
  const auto ht = quadrature_nc(*make_penalty("huberized_t"), v2(8.0, 0.1));
  CHECK(ht.value == doctest::Approx(kHuberizedTNc).epsilon(1e-9));
  CHECK(ht.error_estimate <= 1e-10 * ht.value);
}

TEST_CASE("huberized t normalization has the arctan closed form") {
  // n_c = sigma * (2 atan(kappa) + 1/kappa): Cauchy core plus exponential tails.
  NormalizationModel model(make_penalty("huberized_t"));
  CHECK(model.mode() == NormalizationMode::quadrature);
  for (double k : {0.3, 1.0, 2.5, 8.0}) {
    for (double s : {0.01, 0.5, 3.0}) {
      const double exact = s * (2 * std::atan(k) + 1 / k);
      CHECK(model.log_nc(v2(k, s)) ==
            doctest::Approx(std::log(exact)).epsilon(1e-10));
    }
  }
}

TEST_CASE("closed form agrees with quadrature on a 100-point grid") {
  for (std::string key : {"quantile", "quantile_huber", "huber_scaled", "huber",
                          "vapnik", "l2"}) {
    CAPTURE(key);
    const auto p = make_penalty(key);
    NormalizationModel closed(p, NormalizationMode::closed_form);
    NormalizationModel quad(p, NormalizationMode::quadrature);
    for (int i = 0; i < 100; ++i) {
      const double t = (i + 0.5) / 100.0;
      Vector theta;
      switch (p->num_params()) {
        case 0: theta = Vector::Zero(0); break;
        case 1: theta = v1(key == "quantile" ? 0.02 + 0.96 * t
                                                          : 0.05 + 4.0 * t);
          break;
        default: theta = v2(0.05 + 3.0 * t, 0.1 + 2.0 * (1.0 - t)); break;
      }
      const auto a = closed.evaluate(theta, 2);
      const auto b = quad.evaluate(theta, 2);
      CHECK(std::abs(a.value - b.value) <= 1e-8 * std::max(1.0, std::abs(a.value)));
      if (theta.size() == 0) continue;
      CHECK(selftune::testing::rel_err(a.gradient, b.gradient) <= 1e-7);
      if (key == "vapnik") continue;
      CHECK((a.hessian - b.hessian).norm() <= 1e-6 * std::max(1.0, a.hessian.norm()));
    }
  }
}

TEST_CASE("derivatives of log n_c match central differences") {
  for (std::string key : {"quantile", "quantile_huber", "huber_scaled", "huber",
                          "huberized_t", "smooth_insensitive", "vapnik",
                          "hybrid"}) {
    CAPTURE(key);
    const auto p = make_penalty(key);
    for (auto mode : {NormalizationMode::closed_form, NormalizationMode::quadrature}) {
      if (mode == NormalizationMode::closed_form &&
          !NormalizationModel::has_closed_form(key)) {
        continue;
      }
      NormalizationModel model(p, mode);
      std::mt19937_64 gen(17);
      std::uniform_real_distribution<double> unit(0.1, 0.9), pos(0.3, 3.0);
      for (int trial = 0; trial < 50; ++trial) {
        Vector theta = p->num_params() == 1
                           ? v1(key == "quantile" ? unit(gen) : pos(gen))
                           : v2(pos(gen), pos(gen));
        const auto d = model.evaluate(theta, 2);
        const Vector fd = selftune::testing::fd_gradient(
            [&](const Vector& t) { return model.log_nc(t); }, theta, 1e-5);
        CHECK(selftune::testing::rel_err(d.gradient, fd) <= 1e-5);
        const Matrix fdh = selftune::testing::fd_jacobian(
            [&](const Vector& t) { return model.grad_log_nc(t); }, theta, 1e-5);
        if (key == "vapnik" && mode == NormalizationMode::quadrature) continue;
        CHECK((d.hessian - fdh).norm() <= 1e-5 * std::max(1.0, d.hessian.norm()));
      }
    }
  }
}

TEST_CASE("quantile log n_c is convex with a barrier at the boundary") {
  NormalizationModel model(make_penalty("quantile"));
  const double h = 1e-3;
  for (int i = 0; i <= 90; ++i) {
    const double t = 0.05 + 0.01 * i;
    const double second = model.log_nc(v1(t + h)) - 2 * model.log_nc(v1(t)) +
                          model.log_nc(v1(t - h));
    CHECK(second >= -1e-10);
    CHECK(model.hess_log_nc(v1(t))(0, 0) >= 0.0);
  }
  CHECK(model.log_nc(v1(0.001)) > model.log_nc(v1(0.01)));
  CHECK(model.log_nc(v1(0.01)) > model.log_nc(v1(0.1)));
}

TEST_CASE("boundary and non-integrable inputs diverge") {
  NormalizationModel qh(make_penalty("quantile_huber"));
  try {
    qh.log_nc(v2(0.0, 1.0));
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(e.parameter() == "theta1");
  }
  NormalizationModel q(make_penalty("quantile"));
  CHECK_THROWS_AS(q.log_nc(v1(1.0)), DivergenceError);
  CHECK_THROWS_AS(quadrature_nc(*make_penalty("hinge"), v1(0.5)), DivergenceError);
  CHECK_THROWS_AS(quadrature_nc(*make_penalty("logistic"), v1(1.0)),
                  DivergenceError);
  CHECK_THROWS_AS(NormalizationModel(make_penalty("huberized_t"),
                                     NormalizationMode::closed_form),
                  std::invalid_argument);
}

TEST_CASE("panel budget exhaustion carries the estimate") {
  try {
    integrate_nc(*make_penalty("huberized_t"), v2(8.0, 0.1), 0, 1e-14, 2);
    FAIL("expected ToleranceError");
  } catch (const ToleranceError& e) {
    CHECK(e.estimate() > 0.0);
    CHECK(e.error() > 0.0);
  }
}
