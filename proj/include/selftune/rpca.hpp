#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selftune/normalization.hpp"
#include "selftune/penalty.hpp"
#include "selftune/prox.hpp"

namespace selftune {

/// Factorized robust PCA with a self-tuned penalty:
///
///   min_{U, V, theta}  sum_ij rho(<U_i, V_j> - Y_ij; theta) + m n log n_c(theta),
///
/// U is k x m_pix, V is k x n_frames and the low-rank part is L = U'V.
/// theta = (kappa, sigma) ranges over D = {kappa >= 1e-12, sigma >= 1e-12}.
struct RpcaProblem {
  Matrix Y;
  int k = 2;
  /// huber_scaled or huberized_t.
  std::string penalty = "huberized_t";
  /// (kappa, sigma); defaults to kappa = 2e-3, sigma = 1.
  Vector theta0;
  /// Multiplies the SVD-based initial factors.
  double init_scale = 1.0;

  /// Throws InputError on malformed data or an unsupported penalty.
  void validate() const;
  /// theta0, or the default when it is empty.
  Vector initial_theta() const;
};

/// Positivity floor of kappa and sigma.
inline constexpr double kRpcaThetaFloor = 1e-12;

/// D = {kappa >= floor, sigma >= floor} with interior point (1, 1).
ShapeDomain rpca_domain();

/// Rank-k truncated SVD of Y split as U = sqrt(S_k) U_k', V = sqrt(S_k) V_k'.
void rpca_initial_factors(const Matrix& Y, int k, Matrix& U, Matrix& V);

/// sum_ij rho(<U_i, V_j> - Y_ij; theta) + m n log n_c(theta), summed in a
/// fixed order.
double eval_rpca_objective(const RpcaProblem& problem, const Matrix& U,
                           const Matrix& V, const Vector& theta);

/// Partial gradients of the penalty sum (the log n_c term only enters theta).
struct RpcaGradient {
  Matrix U;
  Matrix V;
  Vector theta;
};
RpcaGradient rpca_gradient(const RpcaProblem& problem, const Matrix& U,
                           const Matrix& V, const Vector& theta);

struct RpcaOptions {
  int max_iter = 3000;
  /// Stop once |F_k - F_{k+1}| <= rel_tol max(1, |F_k|).
  double rel_tol = 1e-7;
  double gamma = 1.1;
  double backtrack = 0.5;
  int max_backtracks = 50;
  bool freeze_theta = false;
  /// Foreground mask threshold in units of MAD(S).
  double mask_mads = 3.0;
  ProxOptions prox;
};

struct RpcaTraceRow {
  int iter = 0;
  double objective = 0.0;
  double kappa = 0.0;
  double sigma = 0.0;
  double c_u = 0.0;
  double c_v = 0.0;
  double d = 0.0;
  /// kappa or sigma reached the positivity floor.
  bool floor_hit = false;
};

struct SeparationResult {
  Matrix U;
  Matrix V;
  Vector theta_final;
  Matrix background;  ///< L = U'V
  Matrix foreground;  ///< S = Y - L
  /// 1 where |S_ij| > mask_mads * MAD(S), else 0.
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask;
  double initial_objective = 0.0;
  std::vector<RpcaTraceRow> trace;
  std::vector<std::string> warnings;
  int iterations = 0;
  bool converged = false;
};

/// Three-block PALM: a gradient step on U (constant gamma L_rho ||V||^2), one
/// on V (gamma L_rho ||U||^2), then the theta prox step of the regression
/// solver with weight m n. Constants double until the descent-lemma
/// inequality holds. Throws SolverError when no constant yields descent.
SeparationResult rpca_solve(const RpcaProblem& problem,
                            const RpcaOptions& opts = {});

/// Median absolute deviation from the median.
double median_absolute_deviation(const Matrix& S);

struct SyntheticRpcaSpec {
  int rows = 100;
  int cols = 60;
  int rank = 2;
  double spike_fraction = 0.05;
  double spike_magnitude = 10.0;
  double noise = 1e-3;
  std::uint64_t seed = 0;
};

struct SyntheticRpca {
  Matrix Y;
  Matrix L0;
  Matrix S0;  ///< spikes only
};

/// L0 = U0'V0 with standard normal factors; spikes of +-magnitude on a random
/// subset of entries; Gaussian noise. Deterministic in the seed.
SyntheticRpca generate_rpca(const SyntheticRpcaSpec& spec);

}  // namespace selftune
