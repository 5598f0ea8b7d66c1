#include "selftune/quadrature.hpp"

#include <algorithm>
#include <queue>
#include <stdexcept>
#include <vector>

namespace selftune {

namespace {

constexpr double kXgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};

constexpr double kWgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};

// Gauss weights for kXgk[1], kXgk[3], kXgk[5] and the centre.
constexpr double kWg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a;
  double b;
  Vector value;
  Vector error;
  double priority;
};

struct ByPriority {
  bool operator()(const Panel& l, const Panel& r) const {
    return l.priority < r.priority;
  }
};

}  // namespace

void gauss_kronrod15(const VectorIntegrand& f, double a, double b,
                     Eigen::Ref<Vector> kronrod, Eigen::Ref<Vector> gauss) {
  const double centre = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const auto dim = kronrod.size();
  Vector lo(dim), hi(dim);
  f(centre, lo);
  kronrod = kWgk[7] * lo;
  gauss = kWg[3] * lo;
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    f(centre - dx, lo);
    f(centre + dx, hi);
    kronrod += kWgk[j] * (lo + hi);
    if (j % 2 == 1) gauss += kWg[j / 2] * (lo + hi);
  }
  kronrod *= half;
  gauss *= half;
}

QuadratureResult integrate_adaptive(const VectorIntegrand& f, int dim,
                                    std::span<const double> points,
                                    const QuadratureOptions& opts) {
  if (points.size() < 2) {
    throw std::invalid_argument("integrate_adaptive needs at least one interval");
  }
  QuadratureResult res;
  res.value = Vector::Zero(dim);
  res.error = Vector::Zero(dim);

  auto make_panel = [&](double a, double b) {
    Panel p{a, b, Vector(dim), Vector(dim), 0.0};
    Vector g(dim);
    gauss_kronrod15(f, a, b, p.value, g);
    p.error = (p.value - g).cwiseAbs();
    return p;
  };

  std::vector<Panel> initial;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    if (points[i + 1] > points[i]) initial.push_back(make_panel(points[i], points[i + 1]));
  }
  for (const auto& p : initial) {
    res.value += p.value;
    res.error += p.error;
  }

  auto scales = [&]() {
    Vector s(dim);
    for (int i = 0; i < dim; ++i) {
      s[i] = std::max({opts.abs_tol, opts.rel_tol * std::abs(res.value[i]),
                       opts.rel_tol * std::abs(res.value[0]), 1e-300});
    }
    return s;
  };
  auto converged = [&](const Vector& s) {
    return (res.error.array() <= s.array()).all();
  };

  Vector scale = scales();
  std::priority_queue<Panel, std::vector<Panel>, ByPriority> heap;
  for (auto& p : initial) {
    p.priority = (p.error.array() / scale.array()).maxCoeff();
    heap.push(std::move(p));
  }
  res.panels = static_cast<int>(heap.size());

  while (!converged(scale) && res.panels < opts.max_panels && !heap.empty()) {
    Panel worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      // Interval can no longer be split in floating point.
      worst.priority = -1.0;
      heap.push(std::move(worst));
      break;
    }
    Panel left = make_panel(worst.a, mid);
    Panel right = make_panel(mid, worst.b);
    res.value += left.value + right.value - worst.value;
    res.error += left.error + right.error - worst.error;
    res.error = res.error.cwiseMax(0.0);
    scale = scales();
    left.priority = (left.error.array() / scale.array()).maxCoeff();
    right.priority = (right.error.array() / scale.array()).maxCoeff();
    heap.push(std::move(left));
    heap.push(std::move(right));
    ++res.panels;
  }

  // Re-sum to shed accumulated cancellation from the running updates.
  res.value.setZero();
  res.error.setZero();
  while (!heap.empty()) {
    res.value += heap.top().value;
    res.error += heap.top().error;
    heap.pop();
  }
  res.converged = converged(scales());
  return res;
}

double integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol) {
  const double pts[2] = {a, b};
  QuadratureOptions opts;
  opts.rel_tol = rel_tol;
  const auto res = integrate_adaptive(
      [&](double x, Eigen::Ref<Vector> out) { out[0] = f(x); }, 1, pts, opts);
  return res.value[0];
}

}  // namespace selftune
