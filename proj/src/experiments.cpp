#include "selftune/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "selftune/errors.hpp"
#include "selftune/io.hpp"
#include "selftune/ip_solver.hpp"
#include "selftune/linalg.hpp"
#include "selftune/normalization.hpp"
#include "selftune/palm.hpp"
#include "selftune/sampling.hpp"
#include "selftune/svg.hpp"

namespace selftune {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::vector<double> kTableTaus = {0.1, 0.2, 0.5, 0.8, 0.9};
const std::vector<double> kConvergenceTaus = {0.1, 0.5, 0.9};

// ---------------------------------------------------------------------------
// Config fields

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& value) {
  Int v{};
  const std::string t = trim(value);
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size() || t.empty()) {
    throw InputError("config key '" + key + "': '" + value +
                     "' is not a valid integer");
  }
  return v;
}

std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::string t = trim(value);
  if (t.empty()) return out;
  std::istringstream in(t);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    out.push_back(parse_double(tok, "config key '" + key + "'"));
  }
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string t = trim(value);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw InputError("config key '" + key + "': '" + value + "' is not a boolean");
}

struct Field {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define STR_FIELD(name, member)                                              \
  Field{name, [](ExperimentConfig& c, const std::string& v) { c.member = trim(v); }, \
        [](const ExperimentConfig& c) { return c.member; }}
#define INT_FIELD(name, member, type)                                        \
  Field{name,                                                                \
        [](ExperimentConfig& c, const std::string& v) {                      \
          c.member = parse_int<type>(name, v);                               \
        },                                                                   \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }}
#define LIST_FIELD(name, member)                                             \
  Field{name,                                                                \
        [](ExperimentConfig& c, const std::string& v) {                      \
          c.member = parse_list(name, v);                                    \
        },                                                                   \
        [](const ExperimentConfig& c) { return join(c.member); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      STR_FIELD("command", command),
      STR_FIELD("penalty", penalty),
      STR_FIELD("solver", solver),
      INT_FIELD("m", m, int),
      INT_FIELD("n", n, int),
      INT_FIELD("trials", trials, int),
      INT_FIELD("seed", seed, std::uint64_t),
      LIST_FIELD("theta-true", theta_true),
      LIST_FIELD("theta-init", theta_init),
      Field{"tol",
            [](ExperimentConfig& c, const std::string& v) {
              c.tol = parse_double(v, "config key 'tol'");
            },
            [](const ExperimentConfig& c) { return format_double(c.tol); }},
      STR_FIELD("out", out),
      STR_FIELD("a", a),
      STR_FIELD("y", y),
      STR_FIELD("input", input),
      INT_FIELD("height", height, int),
      INT_FIELD("k", k, int),
      Field{"frozen",
            [](ExperimentConfig& c, const std::string& v) {
              c.frozen = parse_bool("frozen", v);
            },
            [](const ExperimentConfig& c) {
              return std::string(c.frozen ? "true" : "false");
            }},
      INT_FIELD("grid", grid, int),
      STR_FIELD("format", format),
      INT_FIELD("threads", threads, int),
  };
  return f;
}

#undef STR_FIELD
#undef INT_FIELD
#undef LIST_FIELD

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (key == f.key) return f;
  }
  throw InputError("unknown config key '" + key + "'");
}

// ---------------------------------------------------------------------------
// Helpers

PenaltyPtr penalty_or_throw(const std::string& key) {
  try {
    return make_penalty(key);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
}

/// Runs fn(0..count-1) on a pool of workers; rethrows the first exception.
void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (threads <= 0) {
    threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
  threads = std::max(1, std::min(threads, count));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mutex;
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::string resolve_solver(const std::string& solver, const Penalty& penalty) {
  if (solver != "auto") return solver;
  return penalty.atom() ? "ip" : "palm";
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct SolveOutcome {
  Vector x;
  Vector theta;
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
};

/// Maximum-likelihood shape of the residuals at x0. For huberized_t the
/// search starts at kappa = 2: kappa = 1 is a stationary point of the shape
/// objective for every sample, so a start there never moves.
Vector palm_start(const PalmProblem& problem, const Vector& x0) {
  const Vector r = problem.y() - problem.A() * x0;
  Vector theta0 = problem.domain().interior_point;
  if (problem.penalty().key() == "huberized_t") {
    double scale = 1.4826 * median_absolute_deviation(Matrix(r));
    if (!(scale > 0.0)) scale = std::sqrt(r.squaredNorm() / r.size());
    if (!(scale > 0.0)) scale = 1.0;
    theta0 << 2.0, scale;
  }
  return fit_shape_mle(problem.penalty(), problem.normalization(),
                       problem.domain(), r, theta0);
}

SolveOutcome solve_self_tuned(const Matrix& A, const Vector& y,
                              const PenaltyPtr& penalty,
                              const std::string& solver, double tol,
                              const std::vector<double>& theta_init) {
  SolveOutcome out;
  if (resolve_solver(solver, *penalty) == "ip") {
    const IpProblem problem = IpProblem::self_tuning(A, y, penalty);
    IpOptions opts;
    opts.tol = tol;
    const IpResult r = ip_solve(problem, opts);
    out = {r.x, r.theta, r.iterations, r.converged,
           problem.objective(r.x, r.theta)};
  } else {
    const PalmProblem problem(A, y, penalty);
    PalmOptions opts;
    opts.tol = tol;
    const Vector x0 = least_squares(A, y);
    const Vector theta0 = theta_init.empty() ? palm_start(problem, x0)
                                             : to_vector(theta_init);
    const PalmResult r = palm_solve(problem, x0, theta0, opts);
    out = {r.x, r.theta, r.iterations, r.converged,
           problem.objective(r.x, r.theta)};
  }
  return out;
}

/// l1 baseline: rho = 2 * quantile(0.5) = |r| with the shape pinned.
Vector l1_fit(const Matrix& A, const Vector& y) {
  const IpProblem problem = IpProblem::fixed_shape(
      A, y, make_penalty("quantile"), Vector::Constant(1, 0.5), 2.0);
  const IpResult r = ip_solve(problem);
  if (!r.converged) throw SolverError("l1 baseline did not converge", r.x, r.theta);
  return r.x;
}

/// Rows of theta_true (num_params values each), or the command's default.
std::vector<Vector> theta_rows(const ExperimentConfig& cfg, const Penalty& penalty,
                               const std::vector<double>& taus) {
  const int k = penalty.num_params();
  std::vector<Vector> rows;
  if (!cfg.theta_true.empty()) {
    for (std::size_t i = 0; i < cfg.theta_true.size(); i += k) {
      rows.push_back(Eigen::Map<const Vector>(cfg.theta_true.data() + i, k));
    }
    return rows;
  }
  for (double tau : taus) {
    if (penalty.key() == "quantile") {
      rows.push_back(Vector::Constant(1, tau));
    } else if (penalty.key() == "quantile_huber") {
      rows.push_back(quantile_huber_theta(tau, 1.0));
    } else {
      throw InputError("penalty '" + std::string(penalty.key()) +
                       "' has no default rows; pass --theta-true");
    }
  }
  return rows;
}

std::vector<std::string> suffixed(const std::vector<std::string>& names,
                                  const std::string& suffix) {
  std::vector<std::string> out;
  for (const auto& n : names) out.push_back(n + suffix);
  return out;
}

void append(std::vector<std::string>& cells, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) cells.push_back(format_double(v[i]));
}

std::vector<double> linspace(double a, double b, int count) {
  std::vector<double> out(count);
  for (int i = 0; i < count; ++i) {
    out[i] = count == 1 ? a : a + (b - a) * i / (count - 1);
  }
  return out;
}

Vector native_theta(const Penalty& penalty, const Vector& report) {
  if (penalty.key() == "quantile_huber") {
    return quantile_huber_theta(report[0], report[1]);
  }
  return report;
}

RegressionData make_data(const ExperimentConfig& cfg, const Vector& theta,
                         std::uint64_t trial) {
  SyntheticSpec spec;
  spec.m = cfg.m;
  spec.n = cfg.n;
  spec.penalty = cfg.penalty;
  spec.theta_true = theta;
  spec.seed = cfg.seed;
  spec.trial = trial;
  return generate_regression(spec);
}

/// Divisor of `pixels` closest to (and not above) its square root.
int default_height(Eigen::Index pixels) {
  int h = static_cast<int>(std::sqrt(static_cast<double>(pixels)));
  while (h > 1 && pixels % h != 0) --h;
  return std::max(h, 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.emplace_back(f.key);
    return out;
  }();
  return k;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  field(key).set(*this, value);
}

std::string ExperimentConfig::get(const std::string& key) const {
  return field(key).get(*this);
}

std::string ExperimentConfig::to_text() const {
  std::string s;
  for (const auto& f : fields()) s += std::string(f.key) + " = " + f.get(*this) + "\n";
  return s;
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text,
                                             ExperimentConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw InputError("config line " + std::to_string(lineno) +
                       ": expected key = value");
    }
    base.set(trim(t.substr(0, eq)), t.substr(eq + 1));
  }
  return base;
}

ExperimentConfig ExperimentConfig::from_file(const fs::path& path,
                                             ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return from_text(ss.str(), std::move(base));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void ExperimentConfig::resolve() {
  struct Defaults {
    const char* command;
    const char* penalty;
    int m;
    int n;
  };
  static const Defaults table[] = {
      {"gen", "quantile", 500, 50},         {"table1", "quantile_huber", 1000, 50},
      {"table2", "quantile", 500, 50},      {"scan", "quantile", 500, 20},
      {"converge", "quantile_huber", 1000, 50}, {"rpca", "huberized_t", 100, 60},
      {"fit", "quantile_huber", 0, 0},
  };
  const Defaults* d = nullptr;
  for (const auto& row : table) {
    if (command == row.command) d = &row;
  }
  if (!d) throw InputError("unknown command '" + command + "'");
  if (penalty.empty()) penalty = d->penalty;
  if (m == 0) m = d->m;
  if (n == 0) n = d->n;
  const PenaltyPtr p = penalty_or_throw(penalty);

  if (solver != "auto" && solver != "ip" && solver != "palm") {
    throw InputError("solver must be auto, ip or palm (got '" + solver + "')");
  }
  if (format != "csv" && format != "bin") {
    throw InputError("format must be csv or bin (got '" + format + "')");
  }
  if (trials < 1) throw InputError("trials must be at least 1");
  if (!(tol > 0.0)) throw InputError("tol must be positive");
  if (k < 1) throw InputError("k must be at least 1");
  if (threads < 0 || grid < 0 || height < 0) {
    throw InputError("threads, grid and height must be non-negative");
  }
  if (command != "fit" && (m < 1 || n < 1)) {
    throw InputError("m and n must be positive");
  }
  const auto kp = static_cast<std::size_t>(p->num_params());
  if (!theta_true.empty() && (kp == 0 || theta_true.size() % kp != 0)) {
    throw InputError("theta-true needs a multiple of " + std::to_string(kp) +
                     " values for penalty '" + penalty + "'");
  }
  if (!theta_init.empty() && theta_init.size() != kp) {
    throw InputError("theta-init needs " + std::to_string(kp) +
                     " values for penalty '" + penalty + "'");
  }
  if (theta_true.empty() && (command == "gen" || command == "scan")) {
    if (penalty == "quantile") {
      theta_true = {command == "scan" ? 0.05 : 0.5};
    } else if (penalty == "quantile_huber") {
      const Vector t = quantile_huber_theta(0.5, 1.0);
      theta_true = {t[0], t[1]};
    } else {
      const Vector t = p->domain().interior_point;
      theta_true.assign(t.data(), t.data() + t.size());
    }
  }
  if (command == "scan" && grid == 0) grid = penalty == "quantile" ? 99 : 19;
}

void ExperimentConfig::write_echo() const {
  if (out.empty()) return;
  fs::create_directories(out);
  std::ofstream f(fs::path(out) / "config.txt");
  if (!f) throw InputError("cannot write " + (fs::path(out) / "config.txt").string());
  f << to_text();
}

std::vector<std::string> report_names(const Penalty& penalty) {
  if (penalty.key() == "quantile") return {"tau"};
  if (penalty.key() == "quantile_huber") return {"tau", "kappa"};
  return penalty.parameter_names();
}

Vector report_values(const Penalty& penalty, const Vector& theta) {
  if (penalty.key() == "quantile_huber") {
    const auto [tau, kappa] = quantile_huber_tau_kappa(theta);
    Vector v(2);
    v << tau, kappa;
    return v;
  }
  return theta;
}

// ---------------------------------------------------------------------------
// Tables

bool TableResult::too_many_failures() const {
  return 5 * failed > static_cast<int>(trials.size());
}

TableResult run_table(const ExperimentConfig& cfg) {
  const PenaltyPtr penalty = penalty_or_throw(cfg.penalty);
  const std::vector<Vector> rows = theta_rows(cfg, *penalty, kTableTaus);
  const int trials = cfg.trials;
  const int jobs = static_cast<int>(rows.size()) * trials;

  TableResult result;
  result.names = report_names(*penalty);
  result.trials.resize(jobs);
  parallel_for(jobs, cfg.threads, [&](int job) {
    TrialRecord& rec = result.trials[job];
    rec.row = job / trials;
    rec.trial = job % trials;
    rec.theta_true = rows[rec.row];
    try {
      const RegressionData data = make_data(cfg, rec.theta_true, rec.trial);
      const SolveOutcome s = solve_self_tuned(data.A, data.y, penalty, cfg.solver,
                                              cfg.tol, cfg.theta_init);
      if (!s.converged) throw SolverError("did not converge", s.x, s.theta);
      rec.iterations = s.iterations;
      rec.theta_hat = s.theta;
      rec.err_self = relative_error(s.x, data.x_true);
      rec.err_ls = relative_error(least_squares(data.A, data.y), data.x_true);
      rec.err_l1 = relative_error(l1_fit(data.A, data.y), data.x_true);
      rec.ok = true;
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
  });

  const auto k = static_cast<Eigen::Index>(result.names.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    TableRowSummary s;
    s.theta_true = rows[r];
    s.report_mean = Vector::Zero(k);
    for (int t = 0; t < trials; ++t) {
      const TrialRecord& rec = result.trials[r * trials + t];
      if (!rec.ok) {
        ++result.failed;
        continue;
      }
      ++s.trials_ok;
      s.report_mean += report_values(*penalty, rec.theta_hat);
      s.err_self += rec.err_self;
      s.err_ls += rec.err_ls;
      s.err_l1 += rec.err_l1;
      s.max_iterations = std::max(s.max_iterations, rec.iterations);
    }
    const double cnt = s.trials_ok > 0 ? s.trials_ok : kNaN;
    s.report_mean /= cnt;
    s.err_self /= cnt;
    s.err_ls /= cnt;
    s.err_l1 /= cnt;
    result.rows.push_back(s);
  }

  if (!cfg.out.empty()) {
    cfg.write_echo();
    const fs::path dir(cfg.out);
    std::vector<std::string> header = {"row", "trial"};
    for (const auto& h : suffixed(result.names, "_true")) header.push_back(h);
    header.insert(header.end(), {"status", "iterations"});
    for (const auto& h : suffixed(result.names, "_hat")) header.push_back(h);
    header.insert(header.end(), {"err_self", "err_ls", "err_l1"});
    CsvWriter trials_csv(dir / (cfg.command + "_trials.csv"), header);
    for (const TrialRecord& rec : result.trials) {
      std::vector<std::string> cells = {std::to_string(rec.row),
                                        std::to_string(rec.trial)};
      append(cells, report_values(*penalty, rec.theta_true));
      cells.push_back(rec.ok ? "ok" : "failed");
      cells.push_back(std::to_string(rec.iterations));
      if (rec.ok) {
        append(cells, report_values(*penalty, rec.theta_hat));
        for (double v : {rec.err_self, rec.err_ls, rec.err_l1}) {
          cells.push_back(format_double(v));
        }
      } else {
        cells.insert(cells.end(), k + 3, "");
      }
      trials_csv.row(cells);
    }

    header = {"row"};
    for (const auto& h : suffixed(result.names, "_true")) header.push_back(h);
    header.push_back("trials_ok");
    for (const auto& h : suffixed(result.names, "_mean")) header.push_back(h);
    header.insert(header.end(), {"err_self", "err_ls", "err_l1", "max_iterations"});
    CsvWriter summary_csv(dir / (cfg.command + ".csv"), header);
    for (std::size_t r = 0; r < result.rows.size(); ++r) {
      const TableRowSummary& s = result.rows[r];
      std::vector<std::string> cells = {std::to_string(r)};
      append(cells, report_values(*penalty, s.theta_true));
      cells.push_back(std::to_string(s.trials_ok));
      append(cells, s.report_mean);
      for (double v : {s.err_self, s.err_ls, s.err_l1}) {
        cells.push_back(format_double(v));
      }
      cells.push_back(std::to_string(s.max_iterations));
      summary_csv.row(cells);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Value function scan

ScanResult run_value_scan(const ExperimentConfig& cfg) {
  const PenaltyPtr penalty = penalty_or_throw(cfg.penalty);
  if (penalty->key() != "quantile" && penalty->key() != "quantile_huber") {
    throw InputError("scan supports the quantile and quantile_huber penalties");
  }
  const RegressionData data = make_data(cfg, to_vector(cfg.theta_true), 0);

  ScanResult result;
  result.names = report_names(*penalty);
  const bool two_d = result.names.size() == 2;
  if (two_d) {
    result.axis1 = linspace(0.05, 0.95, cfg.grid);
    result.axis2 = linspace(0.2, 3.0, cfg.grid);
  } else {
    result.axis1 = linspace(0.01, 0.99, cfg.grid);
  }
  const int n1 = static_cast<int>(result.axis1.size());
  const int n2 = two_d ? static_cast<int>(result.axis2.size()) : 1;
  result.values = Matrix::Constant(n2, n1, kNaN);

  parallel_for(n1 * n2, cfg.threads, [&](int job) {
    const int i = job / n1, j = job % n1;
    Vector report(two_d ? 2 : 1);
    report[0] = result.axis1[j];
    if (two_d) report[1] = result.axis2[i];
    try {
      const IpProblem problem = IpProblem::fixed_shape(
          data.A, data.y, penalty, native_theta(*penalty, report));
      IpOptions opts;
      opts.tol = cfg.tol;
      const IpResult r = ip_solve(problem, opts);
      if (r.converged) result.values(i, j) = problem.objective(r.x, r.theta);
    } catch (const Error&) {
      // Cell stays NaN (missing).
    }
  });

  double best = HUGE_VAL;
  result.grid_argmin = Vector::Constant(two_d ? 2 : 1, kNaN);
  for (int i = 0; i < n2; ++i) {
    for (int j = 0; j < n1; ++j) {
      const double v = result.values(i, j);
      if (!std::isfinite(v)) {
        ++result.missing;
        continue;
      }
      if (v < best) {
        best = v;
        result.grid_argmin[0] = result.axis1[j];
        if (two_d) result.grid_argmin[1] = result.axis2[i];
      }
    }
  }

  const IpProblem joint = IpProblem::self_tuning(data.A, data.y, penalty);
  IpOptions opts;
  opts.tol = cfg.tol;
  const IpResult jr = ip_solve(joint, opts);
  result.joint = report_values(*penalty, jr.theta);
  result.joint_objective = joint.objective(jr.x, jr.theta);

  if (!cfg.out.empty()) {
    cfg.write_echo();
    const fs::path dir(cfg.out);
    std::vector<std::string> header = result.names;
    header.insert(header.end(), {"value", "status"});
    CsvWriter csv(dir / "scan.csv", header);
    for (int i = 0; i < n2; ++i) {
      for (int j = 0; j < n1; ++j) {
        std::vector<std::string> cells = {format_double(result.axis1[j])};
        if (two_d) cells.push_back(format_double(result.axis2[i]));
        const double v = result.values(i, j);
        cells.push_back(std::isfinite(v) ? format_double(v) : "");
        cells.push_back(std::isfinite(v) ? "ok" : "missing");
        csv.row(cells);
      }
    }
    header = {"source"};
    header.insert(header.end(), result.names.begin(), result.names.end());
    header.push_back("value");
    CsvWriter summary(dir / "scan_summary.csv", header);
    std::vector<std::string> cells = {"grid_argmin"};
    append(cells, result.grid_argmin);
    cells.push_back(format_double(best));
    summary.row(cells);
    cells = {"joint_solve"};
    append(cells, result.joint);
    cells.push_back(format_double(result.joint_objective));
    summary.row(cells);

    PlotOptions po;
    po.title = "value function of the shape (" + cfg.penalty + ")";
    po.x_label = result.names[0];
    if (two_d) {
      po.y_label = result.names[1];
      write_contour_plot(dir / "scan.svg", result.axis1, result.axis2,
                         result.values, 10, po, result.joint[0], result.joint[1]);
    } else {
      po.y_label = "value";
      PlotSeries s{"value", result.axis1,
                   std::vector<double>(result.values.data(),
                                       result.values.data() + n1)};
      write_line_plot(dir / "scan.svg", {s}, po);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Convergence histories

ConvergenceResult run_convergence(const ExperimentConfig& cfg) {
  const PenaltyPtr penalty = penalty_or_throw(cfg.penalty);
  if (!penalty->atom() || !penalty->smooth() || !penalty->integrable()) {
    throw InputError("converge needs a smooth PLQ penalty such as quantile_huber");
  }
  const std::vector<Vector> rows = theta_rows(cfg, *penalty, kConvergenceTaus);
  ConvergenceResult result;
  result.curves.resize(rows.size());
  parallel_for(static_cast<int>(rows.size()), cfg.threads, [&](int r) {
    ConvergenceCurve& c = result.curves[r];
    c.theta_true = rows[r];
    const RegressionData data = make_data(cfg, c.theta_true, 0);

    const IpProblem ip_problem = IpProblem::self_tuning(data.A, data.y, penalty);
    IpOptions ip_opts;
    ip_opts.tol = cfg.tol;
    const IpResult ip = ip_solve(ip_problem, ip_opts);
    for (const IpTraceRow& row : ip.trace) c.ip_objective.push_back(row.objective);
    c.ip_iterations = ip.iterations;
    if (!ip.converged) c.ip_iterations = std::max(c.ip_iterations, ip_opts.max_iter + 1);

    const PalmProblem palm_problem(data.A, data.y, penalty);
    PalmOptions palm_opts;
    palm_opts.tol = cfg.tol;
    const Vector x0 = least_squares(data.A, data.y);
    const Vector theta0 = cfg.theta_init.empty() ? palm_start(palm_problem, x0)
                                                 : to_vector(cfg.theta_init);
    const PalmResult palm = palm_solve(palm_problem, x0, theta0, palm_opts);
    c.palm_objective.push_back(palm.initial_objective);
    for (const PalmTraceRow& row : palm.trace) {
      const double prev = c.palm_objective.back();
      if (row.objective > prev + 1e-12 * std::max(1.0, std::abs(prev))) {
        c.palm_monotone = false;
      }
      c.palm_objective.push_back(row.objective);
    }
    c.palm_iterations = palm.iterations;
    const double fi = ip_problem.objective(ip.x, ip.theta);
    const double fp = palm_problem.objective(palm.x, palm.theta);
    c.relative_gap = std::abs(fi - fp) / std::max(1.0, std::abs(fi));
  });
  for (const auto& c : result.curves) {
    result.ip_under_20 = result.ip_under_20 && c.ip_iterations < 20;
    result.palm_monotone = result.palm_monotone && c.palm_monotone;
    result.agree = result.agree && c.relative_gap <= 1e-4;
  }

  if (!cfg.out.empty()) {
    cfg.write_echo();
    const fs::path dir(cfg.out);
    std::vector<std::string> header = {"instance"};
    const auto names = report_names(*penalty);
    header.insert(header.end(), names.begin(), names.end());
    header.insert(header.end(), {"solver", "iter", "objective", "gap"});
    CsvWriter csv(dir / "convergence.csv", header);
    for (std::size_t r = 0; r < result.curves.size(); ++r) {
      const ConvergenceCurve& c = result.curves[r];
      const double best = std::min(*std::min_element(c.ip_objective.begin(),
                                                     c.ip_objective.end()),
                                   c.palm_objective.back());
      std::vector<PlotSeries> series;
      for (const auto& [name, values, color] :
           {std::tuple{"ip", &c.ip_objective, "#1f4fd6"},
            std::tuple{"palm", &c.palm_objective, "#2ca02c"}}) {
        PlotSeries s{name, {}, {}, color};
        for (std::size_t k = 0; k < values->size(); ++k) {
          std::vector<std::string> cells = {std::to_string(r)};
          append(cells, report_values(*penalty, c.theta_true));
          cells.insert(cells.end(), {name, std::to_string(k),
                                     format_double((*values)[k]),
                                     format_double((*values)[k] - best)});
          csv.row(cells);
          s.x.push_back(static_cast<double>(k));
          s.y.push_back((*values)[k] - best);
        }
        series.push_back(std::move(s));
      }
      const Vector rep = report_values(*penalty, c.theta_true);
      PlotOptions po;
      po.title = "objective gap, " + names[0] + " = " + format_double(rep[0]);
      po.x_label = "iteration";
      po.y_label = "F - F*";
      po.log_y = true;
      write_line_plot(dir / ("convergence_" + std::to_string(r) + ".svg"),
                      series, po);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// RPCA

RpcaRunResult run_rpca(const ExperimentConfig& cfg) {
  RpcaRunResult result;
  RpcaProblem problem;
  problem.k = cfg.k;
  problem.penalty = cfg.penalty;
  if (!cfg.theta_init.empty()) problem.theta0 = to_vector(cfg.theta_init);

  std::optional<Matrix> L0;
  if (cfg.input.empty()) {
    SyntheticRpcaSpec spec;
    spec.rows = cfg.m;
    spec.cols = cfg.n;
    spec.seed = cfg.seed;
    SyntheticRpca syn = generate_rpca(spec);
    problem.Y = std::move(syn.Y);
    L0 = std::move(syn.L0);
  } else if (fs::is_directory(cfg.input)) {
    problem.Y = read_pgm_stack(cfg.input, result.height, result.width);
  } else {
    problem.Y = read_matrix(cfg.input);
  }
  if (result.height == 0) {
    result.height = cfg.height > 0 ? cfg.height : default_height(problem.Y.rows());
    if (problem.Y.rows() % result.height != 0) {
      throw InputError("height " + std::to_string(result.height) +
                       " does not divide the pixel count " +
                       std::to_string(problem.Y.rows()));
    }
    result.width = static_cast<int>(problem.Y.rows() / result.height);
  }

  result.tuned = rpca_solve(problem);
  if (cfg.frozen) {
    RpcaOptions opts;
    opts.freeze_theta = true;
    result.frozen = rpca_solve(problem, opts);
  }
  auto error = [&](const SeparationResult& s) {
    return L0 ? (s.background - *L0).norm() / L0->norm() : kNaN;
  };
  result.error_tuned = error(result.tuned);
  result.error_frozen = result.frozen ? error(*result.frozen) : kNaN;
  result.ecdf = residual_ecdf(result.tuned, 200);

  if (!cfg.out.empty()) {
    cfg.write_echo();
    const fs::path dir(cfg.out);
    const SeparationResult& s = result.tuned;
    write_pgm_stack(dir / "background", "frame", s.background, result.height,
                    problem.Y.minCoeff(), problem.Y.maxCoeff());
    const double amp = std::max(s.foreground.cwiseAbs().maxCoeff(), 1e-300);
    write_pgm_stack(dir / "foreground", "frame", s.foreground, result.height,
                    -amp, amp);
    write_pgm_stack(dir / "mask", "frame", s.mask.cast<double>(), result.height,
                    0.0, 1.0);

    CsvWriter trace(dir / "theta_trace.csv",
                    {"run", "iter", "objective", "kappa", "sigma", "c_u", "c_v",
                     "d", "floor_hit"});
    std::vector<std::pair<std::string, const SeparationResult*>> runs = {
        {"tuned", &result.tuned}};
    if (result.frozen) runs.emplace_back("frozen", &*result.frozen);
    for (const auto& [name, run] : runs) {
      for (const RpcaTraceRow& row : run->trace) {
        trace.row({name, std::to_string(row.iter), format_double(row.objective),
                   format_double(row.kappa), format_double(row.sigma),
                   format_double(row.c_u), format_double(row.c_v),
                   format_double(row.d), row.floor_hit ? "1" : "0"});
      }
    }

    CsvWriter summary(dir / "summary.csv",
                      {"run", "kappa", "sigma", "objective", "iterations",
                       "converged", "rel_error"});
    for (const auto& [name, run] : runs) {
      const double obj = run->trace.empty() ? run->initial_objective
                                            : run->trace.back().objective;
      summary.row({name, format_double(run->theta_final[0]),
                   format_double(run->theta_final[1]), format_double(obj),
                   std::to_string(run->iterations), run->converged ? "1" : "0",
                   format_double(name == "tuned" ? result.error_tuned
                                                 : result.error_frozen)});
    }

    std::vector<std::string> header = {"r", "empirical"};
    for (const auto& f : result.ecdf.fits) header.push_back("cdf_" + f.family);
    CsvWriter ecdf(dir / "ecdf.csv", header);
    for (const EcdfRow& row : result.ecdf.rows) {
      std::vector<double> v = {row.r, row.empirical};
      v.insert(v.end(), row.fitted.begin(), row.fitted.end());
      ecdf.row(v);
    }
    CsvWriter fits(dir / "ecdf_fits.csv",
                   {"family", "theta", "ks", "neg_log_likelihood"});
    for (const auto& f : result.ecdf.fits) {
      std::vector<double> th(f.theta.data(), f.theta.data() + f.theta.size());
      fits.row({f.family, "\"" + join(th) + "\"", format_double(f.ks),
                format_double(f.neg_log_likelihood)});
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Fit and gen

FitResult run_fit(const ExperimentConfig& cfg) {
  if (cfg.a.empty() || cfg.y.empty()) {
    throw InputError("fit needs --a and --y data files");
  }
  const Matrix A = read_matrix(cfg.a);
  const Matrix Ym = read_matrix(cfg.y);
  if (Ym.cols() != 1 && Ym.rows() != 1) {
    throw InputError(cfg.y + ": expected a single row or column");
  }
  const Vector y = Ym.cols() == 1 ? Vector(Ym.col(0)) : Vector(Ym.row(0).transpose());
  if (y.size() != A.rows()) {
    throw InputError(cfg.y + " has " + std::to_string(y.size()) + " values but " +
                     cfg.a + " has " + std::to_string(A.rows()) + " rows");
  }
  if (A.rows() <= A.cols()) {
    throw InputError(cfg.a + ": need more rows than columns");
  }
  if (!A.allFinite() || !y.allFinite()) throw InputError("fit data must be finite");
  const PenaltyPtr penalty = penalty_or_throw(cfg.penalty);

  FitResult result;
  result.solver = resolve_solver(cfg.solver, *penalty);
  const SolveOutcome s =
      solve_self_tuned(A, y, penalty, result.solver, cfg.tol, cfg.theta_init);
  result.x = s.x;
  result.theta = s.theta;
  result.objective = s.objective;
  result.iterations = s.iterations;
  result.converged = s.converged;

  if (!cfg.out.empty()) {
    cfg.write_echo();
    const fs::path dir(cfg.out);
    write_matrix_csv(dir / "x.csv", result.x);
    std::vector<std::string> header = {"penalty", "solver"};
    const auto names = penalty->parameter_names();
    header.insert(header.end(), names.begin(), names.end());
    header.insert(header.end(), {"objective", "iterations", "converged"});
    CsvWriter csv(dir / "fit.csv", header);
    std::vector<std::string> cells = {cfg.penalty, result.solver};
    append(cells, result.theta);
    cells.insert(cells.end(), {format_double(result.objective),
                               std::to_string(result.iterations),
                               result.converged ? "1" : "0"});
    csv.row(cells);
  }
  return result;
}

void run_gen(const ExperimentConfig& cfg) {
  const RegressionData data = make_data(cfg, to_vector(cfg.theta_true), 0);
  cfg.write_echo();
  const fs::path dir(cfg.out.empty() ? "." : cfg.out);
  const std::string ext = cfg.format == "bin" ? ".bin" : ".csv";
  write_matrix(dir / ("A" + ext), data.A);
  write_matrix(dir / ("x_true" + ext), data.x_true);
  write_matrix(dir / ("y" + ext), data.y);
  write_matrix(dir / ("residuals" + ext), data.residuals);
}

}  // namespace selftune
