#include "selftune/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "selftune/errors.hpp"
#include "selftune/quadrature.hpp"
#include "selftune/rng.hpp"

namespace selftune {

namespace {

constexpr double kTruncationGap = 60.0;
constexpr int kCellsPerSegment = 32;
constexpr double kPieceTol = 1e-13;

std::uint64_t stream_id(std::uint64_t trial, std::uint64_t which) {
  return trial * 4 + which;
}

}  // namespace

ResidualDistribution::ResidualDistribution(PenaltyPtr penalty, Vector theta)
    : penalty_(std::move(penalty)), theta_(std::move(theta)) {
  const Penalty& p = *penalty_;
  try {
    p.check_domain(theta_);
  } catch (const DomainError& e) {
    throw DivergenceError(std::string("cannot sample: ") + e.what(),
                          e.parameter());
  }
  if (!p.integrable()) {
    throw DivergenceError("cannot sample: penalty '" + std::string(p.key()) +
                              "' does not induce a proper density",
                          "");
  }
  std::vector<double> bps = p.breakpoints(theta_);
  std::sort(bps.begin(), bps.end());
  bps.erase(std::unique(bps.begin(), bps.end()), bps.end());
  const TailInfo tails = p.tails(theta_);

  std::vector<double> segments;
  if (tails.kind == TailKind::exact_linear && !bps.empty()) {
    if (!(tails.left_slope > 0.0 && tails.right_slope > 0.0)) {
      throw DivergenceError("cannot sample: tail slope vanishes", "");
    }
    linear_tails_ = true;
    left_slope_ = tails.left_slope;
    right_slope_ = tails.right_slope;
    segments = bps;
  } else {
    double ref = p.value(0.0, theta_);
    double reach = 1.0;
    for (double b : bps) {
      ref = std::min(ref, p.value(b, theta_));
      reach = std::max(reach, std::abs(b));
    }
    double lo = -reach, hi = reach;
    while (p.value(lo, theta_) - ref < kTruncationGap) lo *= 2.0;
    while (p.value(hi, theta_) - ref < kTruncationGap) hi *= 2.0;
    segments.push_back(lo);
    for (double b : bps) segments.push_back(b);
    segments.push_back(hi);
  }

  nodes_.push_back(segments.front());
  for (std::size_t s = 0; s + 1 < segments.size(); ++s) {
    const double a = segments[s], b = segments[s + 1];
    for (int j = 1; j <= kCellsPerSegment; ++j) {
      nodes_.push_back(j == kCellsPerSegment
                           ? b
                           : a + (b - a) * j / kCellsPerSegment);
    }
  }
  cumulative_.assign(nodes_.size(), 0.0);
  for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
    cumulative_[i + 1] = cumulative_[i] + core_partial(i, nodes_[i + 1]);
  }
  if (linear_tails_) {
    left_mass_ = std::exp(-p.value(nodes_.front(), theta_)) / left_slope_;
    right_mass_ = std::exp(-p.value(nodes_.back(), theta_)) / right_slope_;
  }
  total_ = left_mass_ + cumulative_.back() + right_mass_;
  if (!(total_ > 0.0) || !std::isfinite(total_)) {
    throw DivergenceError("cannot sample: n_c is not finite and positive", "");
  }
}

double ResidualDistribution::log_weight(double r) const {
  return -penalty_->value(r, theta_);
}

double ResidualDistribution::density(double r) const {
  return std::exp(log_weight(r)) / total_;
}

double ResidualDistribution::core_partial(std::size_t cell, double r) const {
  const double a = nodes_[cell];
  if (r <= a) return 0.0;
  return integrate([this](double t) { return std::exp(log_weight(t)); }, a, r,
                   kPieceTol);
}

double ResidualDistribution::cdf(double r) const {
  if (r <= nodes_.front()) {
    if (!linear_tails_) return 0.0;
    return std::exp(log_weight(r)) / left_slope_ / total_;
  }
  if (r >= nodes_.back()) {
    if (!linear_tails_) return 1.0;
    return 1.0 - std::exp(log_weight(r)) / right_slope_ / total_;
  }
  const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), r);
  const std::size_t cell = static_cast<std::size_t>(it - nodes_.begin()) - 1;
  return (left_mass_ + cumulative_[cell] + core_partial(cell, r)) / total_;
}

double ResidualDistribution::quantile(double u) const {
  if (!(u > 0.0 && u < 1.0)) {
    throw std::domain_error("quantile: u must lie in (0, 1)");
  }
  const double p = u * total_;
  if (linear_tails_ && p < left_mass_) {
    return nodes_.front() + std::log(p / left_mass_) / left_slope_;
  }
  const double core_p = p - left_mass_;
  if (linear_tails_ && core_p >= cumulative_.back()) {
    const double q = (1.0 - u) * total_;
    if (q < right_mass_) {
      return nodes_.back() + std::log(right_mass_ / q) / right_slope_;
    }
    return nodes_.back();
  }
  if (core_p <= 0.0) return nodes_.front();
  if (core_p >= cumulative_.back()) return nodes_.back();

  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), core_p);
  std::size_t cell = static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  cell = std::min(cell, nodes_.size() - 2);
  const double target = core_p - cumulative_[cell];
  double lo = nodes_[cell], hi = nodes_[cell + 1];
  const double cell_mass = cumulative_[cell + 1] - cumulative_[cell];
  double r = lo + (hi - lo) * std::clamp(target / cell_mass, 0.0, 1.0);
  for (int iter = 0; iter < 100; ++iter) {
    const double g = core_partial(cell, r) - target;
    if (std::abs(g) <= 1e-16 * total_) return r;
    if (g > 0.0) {
      hi = r;
    } else {
      lo = r;
    }
    const double dens = std::exp(log_weight(r));
    double next = r - g / dens;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (std::abs(next - r) <= 1e-14 * (1.0 + std::abs(r))) return next;
    r = next;
  }
  return r;
}

Vector sample_residuals(const PenaltyPtr& penalty, const Vector& theta, int m,
                        std::uint64_t seed, std::uint64_t stream) {
  if (m < 0) throw InputError("sample_residuals: m must be nonnegative");
  const ResidualDistribution dist(penalty, theta);
  const CounterRng rng(seed, stream);
  Vector out(m);
  for (int i = 0; i < m; ++i) out[i] = dist.quantile(rng.uniform(i));
  return out;
}

void SyntheticSpec::validate() const {
  if (!(n >= 1 && m > n)) {
    throw InputError("synthetic instance requires m > n >= 1 (got m=" +
                     std::to_string(m) + ", n=" + std::to_string(n) + ")");
  }
  if (x_true && x_true->size() != n) {
    throw InputError("supplied x_true has length " +
                     std::to_string(x_true->size()) + ", expected " +
                     std::to_string(n));
  }
}

RegressionData generate_regression(const SyntheticSpec& spec) {
  spec.validate();
  const PenaltyPtr penalty = make_penalty(spec.penalty);
  RegressionData data;
  const CounterRng a_rng(spec.seed, stream_id(spec.trial, 0));
  data.A.resize(spec.m, spec.n);
  for (int i = 0; i < spec.m; ++i) {
    for (int j = 0; j < spec.n; ++j) {
      data.A(i, j) = a_rng.normal(static_cast<std::uint64_t>(i) * spec.n + j);
    }
  }
  if (spec.x_true) {
    data.x_true = *spec.x_true;
  } else {
    const CounterRng x_rng(spec.seed, stream_id(spec.trial, 1));
    data.x_true.resize(spec.n);
    for (int j = 0; j < spec.n; ++j) data.x_true[j] = x_rng.normal(j);
  }
  data.residuals = sample_residuals(penalty, spec.theta_true, spec.m, spec.seed,
                                    stream_id(spec.trial, 2));
  data.y = data.A * data.x_true + data.residuals;
  return data;
}

}  // namespace selftune
