#include <doctest.h>

#include <cmath>
#include <numbers>

#include "selftune/errors.hpp"
#include "selftune/normalization.hpp"
#include "selftune/rng.hpp"
#include "selftune/sampling.hpp"
#include "analytic_cdfs.hpp"
#include "test_support.hpp"

using namespace selftune;
using namespace selftune::testing;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }
Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("Philox known-answer vector") {
  const auto out = philox4x32({0, 0, 0, 0}, {0, 0});
  CHECK(out[0] == 0x6627e8d5u);
  CHECK(out[1] == 0xe169c58du);
  CHECK(out[2] == 0xbc57ac4cu);
  CHECK(out[3] == 0x9b00dbd8u);
}

TEST_CASE("counter streams are deterministic and distinct") {
  const CounterRng a(42, 0), b(42, 1), c(43, 0);
  CHECK(a.bits(5) == CounterRng(42, 0).bits(5));
  CHECK(a.bits(5) != b.bits(5));
  CHECK(a.bits(5) != c.bits(5));
  CHECK(a.bits(4) != a.bits(5));
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = a.uniform(i);
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / 100000 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normal quantile inverts the normal CDF") {
  for (double p : {1e-300, 1e-12, 0.001, 0.02425, 0.3, 0.5, 0.9, 0.99999}) {
    const double x = standard_normal_quantile(p);
    CHECK(phi(x) == doctest::Approx(p).epsilon(1e-13));
  }
  CHECK(standard_normal_quantile(0.5) == doctest::Approx(0.0));
  CHECK_THROWS(standard_normal_quantile(0.0));
}

TEST_CASE("tabulated CDF matches analytic CDFs") {
  for (double tau : {0.1, 0.5, 0.9}) {
    ResidualDistribution d(make_penalty("quantile"), v1(tau));
    for (double r : {-30.0, -2.0, -0.1, 0.0, 0.3, 5.0, 40.0}) {
      CHECK(d.cdf(r) == doctest::Approx(quantile_cdf(r, tau)).epsilon(1e-11));
    }
  }
  ResidualDistribution qh(make_penalty("quantile_huber"), v2(0.7, 1.4));
  for (double r : {-5.0, -0.7, -0.2, 0.5, 1.4, 3.0}) {
    CHECK(qh.cdf(r) ==
          doctest::Approx(quantile_huber_cdf(r, 0.7, 1.4)).epsilon(1e-11));
  }
  ResidualDistribution ht(make_penalty("huberized_t"), v2(3.0, 0.2));
  for (double r : {-4.0, -0.6, -0.1, 0.0, 0.35, 0.6, 9.0}) {
    CHECK(ht.cdf(r) == doctest::Approx(huberized_t_cdf(r, 3.0, 0.2)).epsilon(1e-11));
  }
}

TEST_CASE("quantile function inverts the CDF") {
  for (std::string key : {"quantile", "quantile_huber", "huberized_t", "l2",
                          "huber_scaled", "hybrid", "smooth_insensitive"}) {
    CAPTURE(key);
    const auto p = make_penalty(key);
    Vector theta = p->num_params() == 0   ? Vector::Zero(0)
                   : p->num_params() == 1 ? v1(key == "quantile" ? 0.3 : 0.8)
                                          : v2(1.5, 0.6);
    ResidualDistribution d(p, theta);
    for (double u : {1e-12, 1e-6, 0.01, 0.2, 0.5, 0.77, 0.999, 1 - 1e-9}) {
      const double r = d.quantile(u);
      CHECK(d.cdf(r) == doctest::Approx(u).epsilon(1e-9));
    }
  }
}

TEST_CASE("KS fidelity at 1e5 samples") {
  for (double tau : {0.1, 0.5, 0.9}) {
    const Vector s = sample_residuals(make_penalty("quantile"), v1(tau), 100000, 1);
    CHECK(ks_distance(s, [&](double r) { return quantile_cdf(r, tau); }) <= 0.006);
  }
  const Vector s = sample_residuals(make_penalty("quantile_huber"), v2(1, 1), 100000, 2);
  CHECK(ks_distance(s, [](double r) { return quantile_huber_cdf(r, 1, 1); }) <=
        0.006);
  const Vector t = sample_residuals(make_penalty("huberized_t"), v2(2, 0.5), 100000, 3);
  CHECK(ks_distance(t, [](double r) { return huberized_t_cdf(r, 2, 0.5); }) <=
        0.006);
}

TEST_CASE("quantile Huber KS at 1e6 samples") {
  const int m = 1000000;
  const Vector s = sample_residuals(make_penalty("quantile_huber"), v2(1, 1), m, 9);
  CHECK(ks_distance(s, [](double r) { return quantile_huber_cdf(r, 1, 1); }) <=
        1.63 / std::sqrt(m));
}

TEST_CASE("Laplace median and asymmetric tail mass") {
  const int m = 20000;
  const Vector s = sample_residuals(make_penalty("quantile"), v1(0.5), m, 4);
  std::vector<double> v(s.data(), s.data() + m);
  std::sort(v.begin(), v.end());
  const double median = v[m / 2];
  const double iqr = v[3 * m / 4] - v[m / 4];
  CHECK(std::abs(median) <= 3 * iqr / std::sqrt(m));

  const Vector t = sample_residuals(make_penalty("quantile"), v1(0.9), m, 5);
  const double neg = (t.array() < 0.0).cast<double>().mean();
  const double left_mass = quantile_cdf(0.0, 0.9);
  CHECK(std::abs(neg - left_mass) <= 4 * std::sqrt(left_mass * (1 - left_mass) / m));
}

TEST_CASE("generate_regression is deterministic per seed and trial") {
  SyntheticSpec spec;
  spec.m = 60;
  spec.n = 4;
  spec.penalty = "quantile_huber";
  spec.theta_true = v2(0.5, 0.5);
  spec.seed = 123;
  const auto a = generate_regression(spec);
  const auto b = generate_regression(spec);
  CHECK(a.A == b.A);
  CHECK(a.y == b.y);
  CHECK(a.x_true == b.x_true);
  CHECK((a.y - a.A * a.x_true - a.residuals).norm() <= 1e-12);
  spec.trial = 1;
  const auto c = generate_regression(spec);
  CHECK(c.A != a.A);
  CHECK(c.residuals != a.residuals);
}

TEST_CASE("noiseless limit recovers x_true by least squares") {
  SyntheticSpec spec;
  spec.m = 200;
  spec.n = 5;
  spec.penalty = "huber_scaled";
  spec.theta_true = v2(1.0, 1e-10);
  spec.seed = 8;
  const auto d = generate_regression(spec);
  const Vector ls = d.A.colPivHouseholderQr().solve(d.y);
  CHECK((ls - d.x_true).norm() <= 1e-6);
}

TEST_CASE("sampling rejects invalid inputs") {
  CHECK_THROWS_AS(sample_residuals(make_penalty("hinge"), v1(0.5), 10, 1),
                  DivergenceError);
  CHECK_THROWS_AS(sample_residuals(make_penalty("quantile"), v1(1.5), 10, 1),
                  DivergenceError);
  SyntheticSpec spec;
  spec.m = 3;
  spec.n = 5;
  spec.theta_true = v1(0.5);
  CHECK_THROWS_AS(generate_regression(spec), InputError);
}
