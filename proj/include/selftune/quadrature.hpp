#pragma once

#include <functional>
#include <span>

#include "selftune/types.hpp"

namespace selftune {

/// Vector-valued integrand: writes f(x) into `out` (pre-sized).
using VectorIntegrand = std::function<void(double x, Eigen::Ref<Vector> out)>;

struct QuadratureOptions {
  double rel_tol = 1e-10;
  double abs_tol = 0.0;
  int max_panels = 10000;
};

struct QuadratureResult {
  Vector value;
  Vector error;
  int panels = 0;
  bool converged = false;
};

/// One 15-point Kronrod panel on [a, b]; `gauss` receives the embedded
/// 7-point Gauss estimate.
void gauss_kronrod15(const VectorIntegrand& f, double a, double b,
                     Eigen::Ref<Vector> kronrod, Eigen::Ref<Vector> gauss);

/// Globally adaptive Gauss-Kronrod (7/15) integration over the union of the
/// consecutive intervals [points[i], points[i+1]]. Panels are bisected
/// worst-first until every component satisfies
///   error_i <= max(abs_tol, rel_tol * max(|I_i|, |I_0|))
/// so component 0 sets the scale for the others.
QuadratureResult integrate_adaptive(const VectorIntegrand& f, int dim,
                                    std::span<const double> points,
                                    const QuadratureOptions& opts = {});

/// Scalar convenience wrapper.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol = 1e-12);

}  // namespace selftune
