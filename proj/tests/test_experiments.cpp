#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "selftune/errors.hpp"
#include "selftune/experiments.hpp"
#include "selftune/io.hpp"

using namespace selftune;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir =
      fs::temp_directory_path() / ("selftune_test_experiments_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig resolved(const std::string& text) {
  ExperimentConfig cfg = ExperimentConfig::from_text(text, ExperimentConfig{});
  cfg.resolve();
  return cfg;
}

}  // namespace

TEST_CASE("config text round-trips every key") {
  ExperimentConfig cfg;
  cfg.command = "rpca";
  cfg.penalty = "huberized_t";
  cfg.solver = "palm";
  cfg.m = 12;
  cfg.n = 7;
  cfg.seed = 18446744073709551615ull;
  cfg.theta_true = {0.1, 1.0 / 3.0};
  cfg.theta_init = {2.0, 0.5};
  cfg.tol = 1e-9;
  cfg.out = "some dir";
  cfg.frozen = true;
  cfg.format = "bin";
  cfg.threads = 3;
  const ExperimentConfig back =
      ExperimentConfig::from_text(cfg.to_text(), ExperimentConfig{});
  CHECK(back.to_text() == cfg.to_text());
  CHECK(back.seed == cfg.seed);
  CHECK(back.theta_true == cfg.theta_true);
  CHECK(back.out == "some dir");
  CHECK(back.frozen);
  for (const auto& key : ExperimentConfig::keys()) {
    CHECK(back.get(key) == cfg.get(key));
  }
}

TEST_CASE("config text skips comments and rejects bad lines") {
  const auto cfg = ExperimentConfig::from_text(
      "# a comment\n\n  m = 30 \ntheta-true = 0.2, 0.4\n", ExperimentConfig{});
  CHECK(cfg.m == 30);
  CHECK(cfg.theta_true == std::vector<double>{0.2, 0.4});
  CHECK_THROWS_AS(ExperimentConfig::from_text("bogus = 1\n", ExperimentConfig{}),
                  InputError);
  CHECK_THROWS_AS(ExperimentConfig::from_text("m = 3.5\n", ExperimentConfig{}),
                  InputError);
  CHECK_THROWS_AS(ExperimentConfig::from_text("m 3\n", ExperimentConfig{}),
                  InputError);
  CHECK_THROWS_AS(ExperimentConfig::from_text("frozen = maybe\n", ExperimentConfig{}),
                  InputError);
  CHECK_THROWS_AS(ExperimentConfig::from_file("/nonexistent/cfg.txt", ExperimentConfig{}),
                  InputError);
}

TEST_CASE("resolve fills command defaults") {
  const auto t1 = resolved("command = table1\n");
  CHECK(t1.penalty == "quantile_huber");
  CHECK(t1.m == 1000);
  CHECK(t1.n == 50);
  const auto t2 = resolved("command = table2\n");
  CHECK(t2.penalty == "quantile");
  CHECK(t2.m == 500);
  const auto gen = resolved("command = gen\n");
  CHECK(gen.theta_true == std::vector<double>{0.5});
  const auto scan = resolved("command = scan\n");
  CHECK(scan.theta_true == std::vector<double>{0.05});
  CHECK(scan.grid == 99);
  const auto rpca = resolved("command = rpca\n");
  CHECK(rpca.penalty == "huberized_t");
  const auto keep = resolved("command = table2\nm = 40\nn = 4\n");
  CHECK(keep.m == 40);
  CHECK(keep.n == 4);
}

TEST_CASE("resolve rejects inconsistent settings") {
  CHECK_THROWS_AS(resolved("command = nope\n"), InputError);
  CHECK_THROWS_AS(resolved("command = table2\npenalty = nope\n"), InputError);
  CHECK_THROWS_AS(resolved("command = table2\nsolver = newton\n"), InputError);
  CHECK_THROWS_AS(resolved("command = gen\nformat = xml\n"), InputError);
  CHECK_THROWS_AS(resolved("command = table2\ntrials = 0\n"), InputError);
  CHECK_THROWS_AS(resolved("command = table2\ntol = 0\n"), InputError);
  CHECK_THROWS_AS(resolved("command = rpca\nk = 0\n"), InputError);
  CHECK_THROWS_AS(resolved("command = table2\nm = -1\n"), InputError);
  CHECK_THROWS_AS(resolved("command = table1\ntheta-true = 0.1,0.2,0.3\n"),
                  InputError);
  CHECK_THROWS_AS(resolved("command = table1\ntheta-init = 0.1\n"), InputError);
  CHECK_NOTHROW(resolved("command = table1\ntheta-true = 0.1,0.2,0.3,0.4\n"));
}

TEST_CASE("report values map quantile Huber theta to (tau, kappa)") {
  const auto qh = make_penalty("quantile_huber");
  CHECK(report_names(*qh) == std::vector<std::string>{"tau", "kappa"});
  Vector theta(2);
  theta << 0.3, 0.9;  // tau = 0.25, kappa = 1.2
  const Vector r = report_values(*qh, theta);
  CHECK(r[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(r[1] == doctest::Approx(1.2).epsilon(1e-14));
  const auto q = make_penalty("quantile");
  Vector t(1);
  t << 0.7;
  CHECK(report_values(*q, t)[0] == 0.7);
  CHECK(report_names(*q) == std::vector<std::string>{"tau"});
}

TEST_CASE("table output does not depend on the thread count") {
  ExperimentConfig cfg = resolved(
      "command = table2\nm = 120\nn = 5\ntrials = 4\ntheta-true = 0.2,0.7\n");
  const fs::path one = scratch("threads1");
  const fs::path three = scratch("threads3");
  cfg.threads = 1;
  cfg.out = one.string();
  const auto a = run_table(cfg);
  cfg.threads = 3;
  cfg.out = three.string();
  const auto b = run_table(cfg);
  CHECK(a.failed == 0);
  CHECK(b.trials.size() == 8);
  for (std::size_t i = 0; i < b.trials.size(); ++i) {
    CHECK(b.trials[i].row == static_cast<int>(i / 4));
    CHECK(b.trials[i].trial == static_cast<int>(i % 4));
  }
  for (const char* file : {"table2.csv", "table2_trials.csv"}) {
    CHECK_FALSE(slurp(one / file).empty());
    CHECK(slurp(one / file) == slurp(three / file));
  }
  CHECK(fs::exists(three / "config.txt"));
}

TEST_CASE("a nearly noiseless instance is recovered to high accuracy") {
  ExperimentConfig cfg = resolved(
      "command = table2\npenalty = huber_scaled\ntheta-true = 1,1e-6\n"
      "m = 200\nn = 5\ntrials = 3\nout =\n");
  const auto r = run_table(cfg);
  REQUIRE(r.failed == 0);
  for (const auto& t : r.trials) CHECK(t.err_self <= 1e-4);
}

TEST_CASE("failed trials are recorded and counted") {
  const fs::path out = scratch("failures");
  ExperimentConfig cfg = resolved(
      "command = table2\nsolver = palm\nm = 60\nn = 3\ntrials = 2\n"
      "theta-true = 0.3\n");
  cfg.out = out.string();
  const auto r = run_table(cfg);
  CHECK(r.failed == 2);
  CHECK(r.too_many_failures());
  CHECK_FALSE(r.trials[0].error.empty());
  const std::string trials = slurp(out / "table2_trials.csv");
  CHECK(trials.find("0,0,0.3,failed,0,,,,") != std::string::npos);

  TableResult some;
  some.trials.resize(10);
  some.failed = 2;
  CHECK_FALSE(some.too_many_failures());
  some.failed = 3;
  CHECK(some.too_many_failures());
}

TEST_CASE("quantile value scan bottoms out near the true tau") {
  ExperimentConfig cfg = resolved("command = scan\ngrid = 50\nm = 300\nn = 10\n");
  cfg.out = scratch("scan").string();
  const auto r = run_value_scan(cfg);
  CHECK(r.missing == 0);
  REQUIRE(r.values.cols() == 50);
  CHECK(std::abs(r.grid_argmin[0] - 0.05) <= 0.03);
  CHECK(std::abs(r.grid_argmin[0] - r.joint[0]) <= r.axis1[1] - r.axis1[0]);
  // The joint solve is no worse than any grid point.
  CHECK(r.joint_objective <= r.values.minCoeff() + 1e-8 * std::abs(r.values.minCoeff()));
  CHECK(fs::exists(fs::path(cfg.out) / "scan.svg"));
  CHECK(fs::exists(fs::path(cfg.out) / "scan_summary.csv"));
}

TEST_CASE("value scan at tau = 0.5 is nearly symmetric") {
  ExperimentConfig cfg =
      resolved("command = scan\ngrid = 49\nm = 300\nn = 10\ntheta-true = 0.5\n");
  cfg.out = "";
  const auto r = run_value_scan(cfg);
  CHECK(std::abs(r.grid_argmin[0] - 0.5) <= 0.05);
  // Mirror pairs tau, 1 - tau differ by a small fraction of the rise.
  const int g = static_cast<int>(r.axis1.size());
  const double rise = r.values.maxCoeff() - r.values.minCoeff();
  for (int j = 0; j < g / 2; ++j) {
    CHECK(std::abs(r.values(0, j) - r.values(0, g - 1 - j)) <= 0.25 * rise);
  }
}

TEST_CASE("two-parameter scan agrees with the joint solve within a cell") {
  ExperimentConfig cfg = resolved(
      "command = scan\npenalty = quantile_huber\ngrid = 12\nm = 300\nn = 10\n");
  cfg.out = "";
  const auto r = run_value_scan(cfg);
  REQUIRE(r.axis2.size() == 12);
  CHECK(r.missing == 0);
  CHECK(std::abs(r.grid_argmin[0] - r.joint[0]) <= r.axis1[1] - r.axis1[0] + 1e-12);
  CHECK(std::abs(r.grid_argmin[1] - r.joint[1]) <= r.axis2[1] - r.axis2[0] + 1e-12);
}

TEST_CASE("IP and PALM reach the same optimum monotonically") {
  // Default size: at m = 300 the tau = 0.9 instance has no finite optimum
  // (the objective keeps falling as theta_1 grows).
  ExperimentConfig cfg = resolved("command = converge\n");
  cfg.out = scratch("converge").string();
  const auto r = run_convergence(cfg);
  REQUIRE(r.curves.size() == 3);
  CHECK(r.ok());
  for (const auto& c : r.curves) {
    CHECK(c.ip_iterations < 20);
    CHECK(c.relative_gap <= 1e-4);
    CHECK(c.palm_objective.size() == static_cast<std::size_t>(c.palm_iterations) + 1);
  }
  CHECK(fs::exists(fs::path(cfg.out) / "convergence.csv"));
}

TEST_CASE("rpca run writes frames and recovers the synthetic background") {
  const fs::path out = scratch("rpca");
  ExperimentConfig cfg = resolved("command = rpca\nfrozen = true\n");
  cfg.out = out.string();
  const auto r = run_rpca(cfg);
  CHECK(r.height * r.width == 100);
  CHECK(r.error_tuned <= 0.05);
  REQUIRE(r.frozen.has_value());
  CHECK(r.error_tuned <= r.error_frozen);
  int frames = 0;
  for (const auto& e : fs::directory_iterator(out / "background")) {
    frames += e.path().extension() == ".pgm";
  }
  CHECK(frames == 60);
  for (const char* f : {"theta_trace.csv", "summary.csv", "ecdf.csv", "config.txt"}) {
    CHECK(fs::exists(out / f));
  }

  // The written background frames feed back in as a PGM input.
  ExperimentConfig again = resolved("command = rpca\n");
  again.input = (out / "background").string();
  again.out = scratch("rpca_again").string();
  const auto back = run_rpca(again);
  CHECK(back.height == r.height);
  CHECK(std::isnan(back.error_tuned));

  ExperimentConfig empty = resolved("command = rpca\n");
  const fs::path none = scratch("rpca_empty");
  fs::create_directories(none);
  empty.input = none.string();
  empty.out = "";
  CHECK_THROWS_AS(run_rpca(empty), InputError);
}

TEST_CASE("generated data fits back through the file interface") {
  const fs::path dir = scratch("gen_fit");
  ExperimentConfig gen = resolved(
      "command = gen\npenalty = quantile_huber\ntheta-true = 2,2\n"
      "m = 300\nn = 4\nformat = bin\n");
  gen.out = (dir / "data").string();
  run_gen(gen);
  const Matrix A = read_matrix(dir / "data" / "A.bin");
  CHECK(A.rows() == 300);
  CHECK(A.cols() == 4);

  ExperimentConfig fit = resolved("command = fit\n");
  fit.a = (dir / "data" / "A.bin").string();
  fit.y = (dir / "data" / "y.bin").string();
  fit.out = (dir / "fit").string();
  const auto r = run_fit(fit);
  CHECK(r.converged);
  const Matrix x_true = read_matrix(dir / "data" / "x_true.bin");
  CHECK((r.x - x_true.col(0)).norm() <= 0.2 * x_true.norm());
  CHECK((read_matrix(dir / "fit" / "x.csv").col(0) - r.x).norm() == 0.0);

  fit.y = (dir / "data" / "x_true.bin").string();
  CHECK_THROWS_AS(run_fit(fit), InputError);
}
