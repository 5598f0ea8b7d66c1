#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "selftune/errors.hpp"
#include "selftune/experiments.hpp"
#include "selftune/io.hpp"

namespace {

using selftune::ExperimentConfig;
using selftune::format_double;

constexpr int kExitFailure = 1;
constexpr int kExitInput = 2;

const std::map<std::string, std::string> kHelp = {
    {"penalty", "penalty family key (quantile, quantile_huber, huberized_t, ...)"},
    {"solver", "ip, palm or auto"},
    {"m", "number of observations (rows); rpca: pixels of the synthetic instance"},
    {"n", "number of unknowns (columns); rpca: frames of the synthetic instance"},
    {"trials", "trials per table row"},
    {"seed", "seed of the counter-based generator"},
    {"theta-true", "true shape parameters, comma separated (native theta)"},
    {"theta-init", "initial shape for PALM and RPCA, comma separated"},
    {"tol", "solver tolerance"},
    {"out", "output directory"},
    {"a", "fit: design matrix file (CSV or binary)"},
    {"y", "fit: data vector file (CSV or binary)"},
    {"input", "rpca: directory of PGM frames or a pixels x frames matrix file"},
    {"height", "rpca: frame height in pixels"},
    {"k", "rpca: factor rank"},
    {"frozen", "rpca: also run with the shape frozen at its initial value"},
    {"grid", "scan: grid points per axis"},
    {"format", "gen: csv or bin"},
    {"threads", "worker threads (0 = all cores)"},
};

struct Subcommand {
  CLI::App* app = nullptr;
  std::map<std::string, std::string> values;
  bool frozen = false;
  std::string config;
};

void add_options(Subcommand& sub) {
  sub.app->add_option("--config", sub.config,
                      "flat key = value file; flags override its entries");
  for (const auto& key : ExperimentConfig::keys()) {
    if (key == "command") continue;
    const std::string help = kHelp.count(key) ? kHelp.at(key) : key;
    if (key == "frozen") {
      sub.app->add_flag("--frozen", sub.frozen, help);
    } else {
      sub.app->add_option("--" + key, sub.values[key], help);
    }
  }
}

ExperimentConfig build_config(const Subcommand& sub) {
  ExperimentConfig cfg;
  if (!sub.config.empty()) cfg = ExperimentConfig::from_file(sub.config, cfg);
  cfg.command = sub.app->get_name();
  for (const auto& [key, value] : sub.values) {
    if (sub.app->count("--" + key) > 0) cfg.set(key, value);
  }
  if (sub.app->count("--frozen") > 0) cfg.frozen = sub.frozen;
  cfg.resolve();
  return cfg;
}

std::string join(const Eigen::VectorXd& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += format_double(v[i]);
  }
  return s;
}

int run_table_command(const ExperimentConfig& cfg) {
  const auto result = selftune::run_table(cfg);
  std::printf("%s: %zu rows x %d trials, %d failed\n", cfg.command.c_str(),
              result.rows.size(), cfg.trials, result.failed);
  for (const auto& rec : result.trials) {
    if (!rec.ok) {
      std::fprintf(stderr, "row %d trial %d failed: %s\n", rec.row, rec.trial,
                   rec.error.c_str());
    }
  }
  const auto penalty = selftune::make_penalty(cfg.penalty);
  for (const auto& row : result.rows) {
    std::printf("  true [%s]  mean [%s]  err self %.3f  ls %.3f  l1 %.3f  "
                "max iter %d\n",
                join(selftune::report_values(*penalty, row.theta_true)).c_str(),
                join(row.report_mean).c_str(), row.err_self, row.err_ls,
                row.err_l1, row.max_iterations);
  }
  if (result.too_many_failures()) {
    std::fprintf(stderr, "more than 20%% of the trials failed\n");
    return kExitFailure;
  }
  return 0;
}

int run_scan_command(const ExperimentConfig& cfg) {
  const auto r = selftune::run_value_scan(cfg);
  std::printf("scan: grid argmin [%s], joint solve [%s], %d missing cells\n",
              join(r.grid_argmin).c_str(), join(r.joint).c_str(), r.missing);
  return 0;
}

int run_converge_command(const ExperimentConfig& cfg) {
  const auto r = selftune::run_convergence(cfg);
  const auto penalty = selftune::make_penalty(cfg.penalty);
  for (const auto& c : r.curves) {
    std::printf("  %s [%s]: ip %d iterations, palm %d iterations, relative "
                "gap %.2e, palm monotone %s\n",
                cfg.penalty == "quantile_huber" ? "tau,kappa" : "theta",
                join(selftune::report_values(*penalty, c.theta_true)).c_str(),
                c.ip_iterations, c.palm_iterations,
                c.relative_gap, c.palm_monotone ? "yes" : "no");
  }
  if (!r.ip_under_20) std::fprintf(stderr, "IP needed 20 or more iterations\n");
  if (!r.palm_monotone) std::fprintf(stderr, "PALM objective increased\n");
  if (!r.agree) std::fprintf(stderr, "final objectives differ by more than 1e-4\n");
  return r.ok() ? 0 : kExitFailure;
}

int run_rpca_command(const ExperimentConfig& cfg) {
  const auto r = selftune::run_rpca(cfg);
  for (const auto& w : r.tuned.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("rpca: %d x %d frames, theta [%s], %d iterations%s\n", r.height,
              r.width, join(r.tuned.theta_final).c_str(), r.tuned.iterations,
              r.tuned.converged ? "" : " (iteration cap)");
  if (!std::isnan(r.error_tuned)) {
    std::printf("  recovery error %.4g", r.error_tuned);
    if (r.frozen) std::printf(", frozen-shape error %.4g", r.error_frozen);
    std::printf("\n");
  }
  if (r.ecdf.degenerate) {
    std::printf("  residual ECDF: %s\n", r.ecdf.message.c_str());
  } else {
    for (const auto& f : r.ecdf.fits) {
      std::printf("  ECDF fit %-12s KS %.4f\n", f.family.c_str(), f.ks);
    }
  }
  return 0;
}

int run_fit_command(const ExperimentConfig& cfg) {
  const auto r = selftune::run_fit(cfg);
  std::printf("fit (%s): theta [%s], objective %s, %d iterations%s\n",
              r.solver.c_str(), join(r.theta).c_str(),
              format_double(r.objective).c_str(), r.iterations,
              r.converged ? "" : " (not converged)");
  return r.converged ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-tuning robust regression and RPCA experiments"};
  app.require_subcommand(1);
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen", "write a synthetic regression instance"},
      {"table1", "quantile Huber recovery table"},
      {"table2", "quantile recovery table"},
      {"scan", "value function of the shape parameters on a grid"},
      {"converge", "IP and PALM convergence histories"},
      {"rpca", "self-tuned robust PCA background separation"},
      {"fit", "self-tuned fit of user data"},
  };
  std::vector<Subcommand> subs(commands.size());
  for (std::size_t i = 0; i < commands.size(); ++i) {
    subs[i].app = app.add_subcommand(commands[i].first, commands[i].second);
    add_options(subs[i]);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    for (auto& sub : subs) {
      if (!sub.app->parsed()) continue;
      const ExperimentConfig cfg = build_config(sub);
      const std::string& cmd = cfg.command;
      if (cmd == "gen") {
        selftune::run_gen(cfg);
        std::printf("wrote instance to %s\n", cfg.out.c_str());
        return 0;
      }
      if (cmd == "table1" || cmd == "table2") return run_table_command(cfg);
      if (cmd == "scan") return run_scan_command(cfg);
      if (cmd == "converge") return run_converge_command(cfg);
      if (cmd == "rpca") return run_rpca_command(cfg);
      if (cmd == "fit") return run_fit_command(cfg);
    }
  } catch (const selftune::InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
