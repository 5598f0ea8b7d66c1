#include "selftune/ecdf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "selftune/sampling.hpp"

namespace selftune {

double ks_statistic(const Vector& sample,
                    const std::function<double(double)>& cdf) {
  std::vector<double> s(sample.data(), sample.data() + sample.size());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = cdf(s[i]);
    d = std::max({d, f - static_cast<double>(i) / n,
                  static_cast<double>(i + 1) / n - f});
  }
  return d;
}

namespace {

ResidualFit fit_gaussian(const Vector& r) {
  const double n = static_cast<double>(r.size());
  const double sigma = std::sqrt(r.squaredNorm() / n);
  ResidualFit f;
  f.family = "l2";
  f.theta = Vector::Constant(1, sigma);
  f.neg_log_likelihood =
      0.5 * n * std::log(2.0 * std::numbers::pi * sigma * sigma) + 0.5 * n;
  f.cdf = [sigma](double x) { return normal_cdf(x / sigma); };
  return f;
}

ResidualFit fit_laplace(const Vector& r) {
  const double n = static_cast<double>(r.size());
  const double b = r.cwiseAbs().sum() / n;
  ResidualFit f;
  f.family = "l1";
  f.theta = Vector::Constant(1, b);
  f.neg_log_likelihood = n * std::log(2.0 * b) + n;
  f.cdf = [b](double x) {
    return x < 0.0 ? 0.5 * std::exp(x / b) : 1.0 - 0.5 * std::exp(-x / b);
  };
  return f;
}

ResidualFit fit_huberized_t(const Vector& r) {
  const PenaltyPtr pen = make_penalty("huberized_t");
  const NormalizationModel model(pen);
  double scale = 1.4826 * median_absolute_deviation(Matrix(r));
  if (!(scale > 0.0)) scale = std::sqrt(r.squaredNorm() / r.size());
  Vector theta0(2);
  theta0 << 2.0, scale;
  ResidualFit f;
  f.family = "huberized_t";
  f.theta = fit_shape_mle(*pen, model, pen->domain(), r, theta0, 500);
  f.neg_log_likelihood = static_cast<double>(r.size()) * model.log_nc(f.theta);
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    f.neg_log_likelihood += pen->value(r[i], f.theta);
  }
  auto dist = std::make_shared<ResidualDistribution>(pen, f.theta);
  f.cdf = [dist](double x) { return dist->cdf(x); };
  return f;
}

}  // namespace

EcdfReport residual_ecdf(const Vector& residuals, std::size_t max_rows) {
  EcdfReport rep;
  if (residuals.size() < 2 || !residuals.allFinite()) {
    rep.degenerate = true;
    rep.message = "residual sample needs at least two finite values";
    return rep;
  }
  const double spread = residuals.maxCoeff() - residuals.minCoeff();
  if (!(spread > 0.0) || residuals.squaredNorm() == 0.0) {
    rep.degenerate = true;
    rep.message = "zero-variance residuals: no distribution fit attempted";
    return rep;
  }
  rep.fits.push_back(fit_huberized_t(residuals));
  rep.fits.push_back(fit_gaussian(residuals));
  rep.fits.push_back(fit_laplace(residuals));
  for (auto& f : rep.fits) f.ks = ks_statistic(residuals, f.cdf);
  std::stable_sort(rep.fits.begin(), rep.fits.end(),
                   [](const ResidualFit& a, const ResidualFit& b) {
                     return a.ks < b.ks;
                   });

  std::vector<double> s(residuals.data(), residuals.data() + residuals.size());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  const std::size_t rows = max_rows == 0 ? n : std::min(max_rows, n);
  for (std::size_t j = 0; j < rows; ++j) {
    const std::size_t i = rows == n ? j : (j * (n - 1)) / std::max<std::size_t>(rows - 1, 1);
    EcdfRow row;
    row.r = s[i];
    row.empirical = static_cast<double>(i + 1) / static_cast<double>(n);
    for (const auto& f : rep.fits) row.fitted.push_back(f.cdf(s[i]));
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

EcdfReport residual_ecdf(const SeparationResult& result, std::size_t max_rows) {
  const Matrix& S = result.foreground;
  return residual_ecdf(Vector(Eigen::Map<const Vector>(S.data(), S.size())),
                       max_rows);
}

}  // namespace selftune
