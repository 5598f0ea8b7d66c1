#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "selftune/ecdf.hpp"
#include "selftune/penalty.hpp"
#include "selftune/rpca.hpp"

namespace selftune {

/// Settings of one CLI run. Text form: one "key = value" per line with keys
/// equal to the long flag names; vectors are comma separated. Zero m, n or
/// grid and empty penalty or theta fields mean "use the command's default"
/// and are filled in by resolve().
struct ExperimentConfig {
  std::string command;
  std::string penalty;
  /// ip, palm or auto (ip when the penalty has a conjugate atom).
  std::string solver = "auto";
  int m = 0;
  int n = 0;
  int trials = 10;
  std::uint64_t seed = 2024;
  /// Native shape parameters of the penalty, one row of a table per value
  /// when given (tables and convergence runs otherwise use their own rows).
  std::vector<double> theta_true;
  /// Starting shape for PALM and RPCA; ignored by the IP solver. PALM
  /// otherwise starts at the maximum-likelihood shape of the least-squares
  /// residuals.
  std::vector<double> theta_init;
  double tol = 1e-8;
  std::string out = "out";
  /// fit: design and data files (CSV or binary matrix).
  std::string a;
  std::string y;
  /// rpca: directory of PGM frames or a pixels x frames matrix file; empty
  /// selects the synthetic instance.
  std::string input;
  /// rpca: frame height in pixels (0 picks a divisor of the pixel count).
  int height = 0;
  /// rpca: factor rank.
  int k = 2;
  /// rpca: also run with theta frozen at its initial value.
  bool frozen = false;
  /// scan: grid points per axis.
  int grid = 0;
  /// gen: csv or bin.
  std::string format = "csv";
  /// Worker threads for independent trials (0 = hardware concurrency).
  int threads = 0;

  static const std::vector<std::string>& keys();
  /// Throws InputError on an unknown key or a malformed value.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// Every key in keys() order; from_text(to_text()) reproduces the config.
  std::string to_text() const;
  /// Applies "key = value" lines on top of `base`. Blank lines and lines
  /// starting with # are ignored.
  static ExperimentConfig from_text(const std::string& text,
                                    ExperimentConfig base);
  static ExperimentConfig from_file(const std::filesystem::path& path,
                                    ExperimentConfig base);

  /// Fills command defaults. Throws InputError for an unknown command,
  /// penalty or solver, or inconsistent sizes.
  void resolve();
  /// Writes to_text() to out/config.txt.
  void write_echo() const;
};

/// User-facing parameters of a penalty's shape: (tau) for quantile, (tau,
/// kappa) for quantile_huber, the native theta otherwise.
std::vector<std::string> report_names(const Penalty& penalty);
Vector report_values(const Penalty& penalty, const Vector& theta);

struct TrialRecord {
  int row = 0;
  int trial = 0;
  Vector theta_true;
  bool ok = false;
  std::string error;
  int iterations = 0;
  Vector theta_hat;
  double err_self = 0.0;
  double err_ls = 0.0;
  double err_l1 = 0.0;
};

struct TableRowSummary {
  Vector theta_true;
  int trials_ok = 0;
  /// Trial means of the report parameters of theta*.
  Vector report_mean;
  double err_self = 0.0;
  double err_ls = 0.0;
  double err_l1 = 0.0;
  int max_iterations = 0;
};

struct TableResult {
  std::vector<std::string> names;  ///< report parameter names
  std::vector<TrialRecord> trials;  ///< sorted by (row, trial)
  std::vector<TableRowSummary> rows;
  int failed = 0;
  /// More than 20% of the trials failed.
  bool too_many_failures() const;
};

/// Recovery table of the table1 (quantile Huber, m = 1000) and table2
/// (quantile, m = 500) commands: per row and trial, generate data, self-tune,
/// and compare with the least-squares and l1 (2 x quantile(0.5), shape
/// pinned) baselines. Trials run in parallel on disjoint counter streams.
/// Writes <command>_trials.csv, <command>.csv and config.txt into cfg.out
/// when it is non-empty.
TableResult run_table(const ExperimentConfig& cfg);

struct ScanResult {
  std::vector<std::string> names;
  /// Report-parameter grid; axis2 is empty for one-parameter families.
  std::vector<double> axis1;
  std::vector<double> axis2;
  /// values(i, j) at (axis1[j], axis2[i]); NaN marks a failed inner solve.
  Matrix values;
  int missing = 0;
  Vector grid_argmin;  ///< report parameters
  Vector joint;        ///< report parameters of the joint solve
  double joint_objective = 0.0;
};

/// Value function varrho(theta) = min_x sum rho(y - A x; theta) + m log
/// n_c(theta) on a grid, each inner problem solved by the IP method with
/// theta pinned. Writes scan.csv, scan.svg and config.txt.
ScanResult run_value_scan(const ExperimentConfig& cfg);

struct ConvergenceCurve {
  Vector theta_true;
  std::vector<double> ip_objective;    ///< start, then after each iteration
  std::vector<double> palm_objective;  ///< start, then after each iteration
  int ip_iterations = 0;
  int palm_iterations = 0;
  bool palm_monotone = true;
  /// |F_ip - F_palm| / max(1, |F_ip|).
  double relative_gap = 0.0;
};

struct ConvergenceResult {
  std::vector<ConvergenceCurve> curves;
  bool ip_under_20 = true;
  bool palm_monotone = true;
  bool agree = true;
  bool ok() const { return ip_under_20 && palm_monotone && agree; }
};

/// Both solvers on identical quantile Huber data for tau in {0.1, 0.5, 0.9},
/// kappa = 1. Writes convergence.csv, one SVG per instance and config.txt.
ConvergenceResult run_convergence(const ExperimentConfig& cfg);

struct RpcaRunResult {
  int height = 0;
  int width = 0;
  SeparationResult tuned;
  std::optional<SeparationResult> frozen;
  /// ||L - L0||_F / ||L0||_F when the ground truth is known, else NaN.
  double error_tuned = 0.0;
  double error_frozen = 0.0;
  EcdfReport ecdf;
};

/// Separates a frame stack (or the seeded synthetic instance) and writes
/// background/, foreground/ and mask/ PGM frames, theta_trace.csv, ecdf.csv,
/// summary.csv and config.txt.
RpcaRunResult run_rpca(const ExperimentConfig& cfg);

struct FitResult {
  std::string solver;
  Vector x;
  Vector theta;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Self-tuned fit of user data (cfg.a, cfg.y). Writes x.csv, fit.csv and
/// config.txt.
FitResult run_fit(const ExperimentConfig& cfg);

/// Writes A, x_true, y and residuals of one synthetic regression instance
/// (CSV or binary per cfg.format) plus config.txt.
void run_gen(const ExperimentConfig& cfg);

}  // namespace selftune
