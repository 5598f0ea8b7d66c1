#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "selftune/ecdf.hpp"
#include "selftune/errors.hpp"
#include "selftune/rpca.hpp"
#include "selftune/sampling.hpp"
#include "test_support.hpp"

using namespace selftune;

namespace {

Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

Matrix random_matrix(int r, int c, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix A(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) A(i, j) = nd(gen);
  return A;
}

/// Direct double loop over the entries, independent of the library sums.
double oracle_objective(const std::string& key, const Matrix& Y, const Matrix& U,
                        const Matrix& V, const Vector& theta) {
  const auto pen = make_penalty(key);
  double f = 0.0;
  for (int i = 0; i < Y.rows(); ++i) {
    for (int j = 0; j < Y.cols(); ++j) {
      f += pen->value(U.col(i).dot(V.col(j)) - Y(i, j), theta);
    }
  }
  const double nc = quadrature_nc(*pen, theta, 1e-12).value;
  return f + static_cast<double>(Y.size()) * std::log(nc);
}

bool nonincreasing(const SeparationResult& r) {
  double prev = r.initial_objective;
  for (const auto& row : r.trace) {
    if (row.objective > prev + 1e-12 * std::max(1.0, std::abs(prev))) return false;
    prev = row.objective;
  }
  return true;
}

SyntheticRpca spike_instance() {
  SyntheticRpcaSpec spec;
  spec.seed = 7;
  return generate_rpca(spec);
}

double recovery_error(const SeparationResult& r, const Matrix& L0) {
  return (r.background - L0).norm() / L0.norm();
}

}  // namespace

TEST_CASE("RPCA objective special cases") {
  std::mt19937_64 gen(1);
  for (const char* key : {"huberized_t", "huber_scaled"}) {
    CAPTURE(key);
    RpcaProblem p;
    p.penalty = key;
    p.Y = random_matrix(6, 5, gen);
    const Vector theta = v2(0.8, 0.6);
    const auto pen = make_penalty(key);
    const NormalizationModel model(pen);

    const Matrix U0 = Matrix::Zero(2, 6), V0 = Matrix::Zero(2, 5);
    double expect = 30.0 * model.log_nc(theta);
    for (Eigen::Index i = 0; i < p.Y.size(); ++i) {
      expect += pen->value(-p.Y.data()[i], theta);
    }
    CHECK(eval_rpca_objective(p, U0, V0, theta) ==
          doctest::Approx(expect).epsilon(1e-13));

    const Matrix U = random_matrix(2, 6, gen), V = random_matrix(2, 5, gen);
    const double f = eval_rpca_objective(p, U, V, theta);
    CHECK(f == doctest::Approx(oracle_objective(key, p.Y, U, V, theta)).epsilon(1e-9));
    CHECK(eval_rpca_objective(p, 2.0 * U, 0.5 * V, theta) ==
          doctest::Approx(f).epsilon(1e-13));

    RpcaProblem single;
    single.penalty = key;
    single.Y = Matrix::Zero(1, 1);
    single.k = 1;
    CHECK(eval_rpca_objective(single, Matrix::Zero(1, 1), Matrix::Zero(1, 1), theta) ==
          doctest::Approx(model.log_nc(theta)).epsilon(1e-13));
  }
}

TEST_CASE("RPCA objective gauge invariance under rotations") {
  std::mt19937_64 gen(2);
  RpcaProblem p;
  p.Y = random_matrix(20, 15, gen);
  const Matrix U = random_matrix(2, 20, gen), V = random_matrix(2, 15, gen);
  const Vector theta = v2(1.5, 0.7);
  const double f = eval_rpca_objective(p, U, V, theta);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix Q = Eigen::HouseholderQR<Matrix>(random_matrix(2, 2, gen))
                         .householderQ();
    CHECK(std::abs(eval_rpca_objective(p, Q * U, Q * V, theta) - f) <= 1e-9);
  }
}

TEST_CASE("RPCA gradients match finite differences") {
  std::mt19937_64 gen(4);
  for (const char* key : {"huberized_t", "huber_scaled"}) {
    CAPTURE(key);
    RpcaProblem p;
    p.penalty = key;
    p.Y = random_matrix(5, 4, gen);
    const Matrix U = random_matrix(2, 5, gen), V = random_matrix(2, 4, gen);
    const Vector theta = v2(1.2, 0.9);
    const RpcaGradient g = rpca_gradient(p, U, V, theta);
    const auto pen = make_penalty(key);
    const NormalizationModel model(pen);
    const double w = static_cast<double>(p.Y.size());

    const auto fu = [&](const Vector& u) {
      return eval_rpca_objective(p, Eigen::Map<const Matrix>(u.data(), 2, 5), V, theta);
    };
    const auto fv = [&](const Vector& v) {
      return eval_rpca_objective(p, U, Eigen::Map<const Matrix>(v.data(), 2, 4), theta);
    };
    const auto ft = [&](const Vector& t) { return eval_rpca_objective(p, U, V, t); };
    const Vector gu = Eigen::Map<const Vector>(g.U.data(), g.U.size());
    const Vector gv = Eigen::Map<const Vector>(g.V.data(), g.V.size());
    CHECK(testing::rel_err(gu, testing::fd_gradient(fu, Eigen::Map<const Vector>(U.data(), U.size()))) <= 1e-5);
    CHECK(testing::rel_err(gv, testing::fd_gradient(fv, Eigen::Map<const Vector>(V.data(), V.size()))) <= 1e-5);
    CHECK(testing::rel_err(Vector(g.theta + w * model.grad_log_nc(theta)),
                           testing::fd_gradient(ft, theta)) <= 1e-5);
  }
}

TEST_CASE("RPCA input validation") {
  RpcaProblem p;
  CHECK_THROWS_AS(p.validate(), InputError);
  p.Y = Matrix::Ones(4, 3);
  p.penalty = "quantile";
  CHECK_THROWS_AS(p.validate(), InputError);
  p.penalty = "huberized_t";
  p.k = 4;
  CHECK_THROWS_AS(p.validate(), InputError);
  p.k = 2;
  p.theta0 = v2(0.0, 1.0);
  CHECK_THROWS_AS(p.validate(), InputError);
  p.theta0 = Vector();
  CHECK_NOTHROW(p.validate());
  CHECK(p.initial_theta().isApprox(v2(2e-3, 1.0)));
}

TEST_CASE("synthetic RPCA generator") {
  const SyntheticRpca a = spike_instance();
  const SyntheticRpca b = spike_instance();
  CHECK(a.Y == b.Y);
  CHECK(a.L0.rows() == 100);
  CHECK(a.L0.cols() == 60);
  CHECK((a.S0.array() != 0.0).count() == 300);
  CHECK((a.S0.array().abs() == 10.0).count() == 300);
  Eigen::JacobiSVD<Matrix> svd(a.L0);
  CHECK(svd.singularValues()[2] <= 1e-10 * svd.singularValues()[0]);
  const double noise = (a.Y - a.L0 - a.S0).norm() / std::sqrt(6000.0);
  CHECK(noise == doctest::Approx(1e-3).epsilon(0.05));
}

TEST_CASE("exactly low-rank data is reproduced with no foreground") {
  SyntheticRpcaSpec spec;
  spec.seed = 3;
  spec.spike_fraction = 0.0;
  spec.noise = 0.0;
  const SyntheticRpca data = generate_rpca(spec);
  RpcaProblem p;
  p.Y = data.Y;
  const SeparationResult r = rpca_solve(p);
  CHECK(r.foreground.norm() <= 1e-10 * data.Y.norm());
  const auto pen = make_penalty("huberized_t");
  const NormalizationModel model(pen);
  const double floor = static_cast<double>(data.Y.size()) *
                       (pen->value(0.0, r.theta_final) + model.log_nc(r.theta_final));
  CHECK(r.trace.back().objective == doctest::Approx(floor).epsilon(1e-9));
  // sigma is driven onto the positivity floor and the trace says so.
  CHECK(r.trace.back().floor_hit);
  CHECK(!r.warnings.empty());
  CHECK(r.theta_final.minCoeff() > kRpcaThetaFloor);
}

TEST_CASE("self-tuned huberized_t recovers the low-rank part") {
  const SyntheticRpca data = spike_instance();
  RpcaProblem p;
  p.Y = data.Y;
  p.penalty = "huberized_t";
  const SeparationResult tuned = rpca_solve(p);
  RpcaOptions frozen_opts;
  frozen_opts.freeze_theta = true;
  const SeparationResult frozen = rpca_solve(p, frozen_opts);

  const double err = recovery_error(tuned, data.L0);
  const double err_frozen = recovery_error(frozen, data.L0);
  MESSAGE("self-tuned error " << err << ", frozen error " << err_frozen);
  CHECK(err <= 0.05);
  CHECK(err <= err_frozen);
  CHECK(nonincreasing(tuned));
  CHECK(nonincreasing(frozen));
  CHECK(frozen.theta_final.isApprox(p.initial_theta()));

  // L = U'V has rank <= k and S + L reproduces Y.
  Eigen::JacobiSVD<Matrix> svd(tuned.background);
  CHECK(svd.singularValues()[2] <= 1e-10 * svd.singularValues()[0]);
  CHECK((tuned.foreground + tuned.background - data.Y).cwiseAbs().maxCoeff() <=
        1e-12 * data.Y.cwiseAbs().maxCoeff());

  // The MAD mask marks the spikes.
  const Eigen::ArrayXXd truth = (data.S0.array() != 0.0).cast<double>();
  const double agree =
      (tuned.mask.cast<double>().array() == truth).cast<double>().mean();
  CHECK(agree >= 0.95);
  CHECK(((tuned.mask.cast<double>().array() == 1.0) && (truth == 1.0)).count() ==
        300);
}

TEST_CASE("huber_scaled kappa / sigma ratio stabilizes") {
  const SyntheticRpca data = spike_instance();
  RpcaProblem p;
  p.Y = data.Y;
  p.penalty = "huber_scaled";
  const SeparationResult r = rpca_solve(p);
  CHECK(nonincreasing(r));
  const auto& late = r.trace[static_cast<std::size_t>(0.8 * r.trace.size())];
  const auto& last = r.trace.back();
  const double ratio_late = late.kappa / late.sigma;
  const double ratio_last = last.kappa / last.sigma;
  MESSAGE("kappa/sigma at 80%: " << ratio_late << ", final: " << ratio_last);
  CHECK(std::abs(ratio_last - ratio_late) <= 0.1 * ratio_late);
  CHECK(last.kappa < r.trace.front().kappa);
  CHECK(last.sigma < r.trace.front().sigma);
}

TEST_CASE("RPCA runs are deterministic") {
  SyntheticRpcaSpec spec;
  spec.rows = 30;
  spec.cols = 20;
  spec.seed = 11;
  const SyntheticRpca data = generate_rpca(spec);
  RpcaProblem p;
  p.Y = data.Y;
  RpcaOptions opts;
  opts.max_iter = 200;
  const SeparationResult a = rpca_solve(p, opts);
  const SeparationResult b = rpca_solve(p, opts);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].objective == b.trace[i].objective);
  }
  CHECK(a.background == b.background);
}

TEST_CASE("median absolute deviation") {
  Matrix S(1, 5);
  S << 1.0, 2.0, 3.0, 4.0, 100.0;
  CHECK(median_absolute_deviation(S) == doctest::Approx(1.0));
  Matrix T(2, 2);
  T << 1.0, 2.0, 3.0, 4.0;
  CHECK(median_absolute_deviation(T) == doctest::Approx(1.0));
}

TEST_CASE("KS statistic against a uniform CDF") {
  Vector s(4);
  s << 0.1, 0.4, 0.6, 0.9;
  const double d = ks_statistic(s, [](double x) { return x; });
  // Largest gap is at 0.1 (0.25 - 0.1 = 0.15) and 0.9 (0.9 - 0.75).
  CHECK(d == doctest::Approx(0.15));
}

TEST_CASE("residual ECDF picks the generating family") {
  SUBCASE("scaled Gaussian residuals") {
    const Vector r = 0.3 * sample_residuals(make_penalty("l2"), Vector(), 5000, 5);
    const EcdfReport rep = residual_ecdf(r);
    REQUIRE(!rep.degenerate);
    CHECK(rep.best().family == "l2");
    CHECK(rep.best().theta[0] == doctest::Approx(0.3).epsilon(0.05));
  }
  SUBCASE("huberized_t residuals") {
    const Vector r =
        sample_residuals(make_penalty("huberized_t"), v2(3.0, 1.0), 5000, 6);
    const EcdfReport rep = residual_ecdf(r, 50);
    REQUIRE(!rep.degenerate);
    CHECK(rep.best().family == "huberized_t");
    CHECK(rep.rows.size() == 50);
    for (std::size_t i = 1; i < rep.rows.size(); ++i) {
      CHECK(rep.rows[i].r >= rep.rows[i - 1].r);
      CHECK(rep.rows[i].empirical > rep.rows[i - 1].empirical);
    }
    CHECK(rep.rows.back().empirical == 1.0);
  }
  SUBCASE("constant zero residuals are reported as degenerate") {
    const EcdfReport rep = residual_ecdf(Vector::Zero(100));
    CHECK(rep.degenerate);
    CHECK(rep.fits.empty());
    CHECK(!rep.message.empty());
  }
}
