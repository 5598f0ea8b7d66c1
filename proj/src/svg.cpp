#include "selftune/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "selftune/errors.hpp"

namespace selftune {

namespace {

constexpr double kMarginLeft = 70.0;
constexpr double kMarginRight = 20.0;
constexpr double kMarginTop = 36.0;
constexpr double kMarginBottom = 50.0;

std::string num(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Maps data coordinates to the plot rectangle.
struct Frame {
  double x0, x1, y0, y1;
  double w, h;

  double px(double x) const {
    return kMarginLeft + (x - x0) / (x1 - x0) * (w - kMarginLeft - kMarginRight);
  }
  double py(double y) const {
    return h - kMarginBottom - (y - y0) / (y1 - y0) * (h - kMarginTop - kMarginBottom);
  }
};

void widen(double& lo, double& hi) {
  if (!(hi > lo)) {
    const double pad = lo == 0.0 ? 1.0 : 0.05 * std::abs(lo);
    lo -= pad;
    hi += pad;
  }
}

void axes(std::ostream& out, const Frame& f, const PlotOptions& opts,
          bool log_y) {
  out << "<rect x='" << kMarginLeft << "' y='" << kMarginTop << "' width='"
      << f.w - kMarginLeft - kMarginRight << "' height='"
      << f.h - kMarginTop - kMarginBottom
      << "' fill='none' stroke='black'/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = f.x0 + (f.x1 - f.x0) * t / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * t / 4.0;
    out << "<text x='" << f.px(xv) << "' y='" << f.h - kMarginBottom + 16
        << "' font-size='11' text-anchor='middle'>" << num(xv) << "</text>\n";
    out << "<text x='" << kMarginLeft - 6 << "' y='" << f.py(yv) + 4
        << "' font-size='11' text-anchor='end'>"
        << num(log_y ? std::pow(10.0, yv) : yv) << "</text>\n";
  }
  out << "<text x='" << f.w / 2 << "' y='20' font-size='14' "
      << "text-anchor='middle'>" << escape(opts.title) << "</text>\n";
  out << "<text x='" << f.w / 2 << "' y='" << f.h - 10
      << "' font-size='12' text-anchor='middle'>" << escape(opts.x_label)
      << "</text>\n";
  out << "<text x='14' y='" << f.h / 2 << "' font-size='12' "
      << "text-anchor='middle' transform='rotate(-90 14 " << f.h / 2 << ")'>"
      << escape(opts.y_label) << "</text>\n";
}

std::ofstream open_svg(const std::filesystem::path& path, const PlotOptions& opts) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << opts.width
      << "' height='" << opts.height << "'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n";
  return out;
}

/// Blue-to-yellow ramp for t in [0, 1].
std::string ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(68 + t * (253 - 68)));
  const int g = static_cast<int>(std::lround(1 + t * (231 - 1)));
  const int b = static_cast<int>(std::lround(84 + t * (37 - 84)));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

void write_line_plot(const std::filesystem::path& path,
                     const std::vector<PlotSeries>& series,
                     const PlotOptions& opts) {
  auto tr = [&](double y) {
    if (!opts.log_y) return y;
    return y > 0.0 ? std::log10(y) : std::numeric_limits<double>::quiet_NaN();
  };
  double x0 = HUGE_VAL, x1 = -HUGE_VAL, y0 = HUGE_VAL, y1 = -HUGE_VAL;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) {
      throw std::invalid_argument("write_line_plot: x and y sizes differ");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double y = tr(s.y[i]);
      if (!std::isfinite(s.x[i]) || !std::isfinite(y)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  widen(x0, x1);
  widen(y0, y1);
  const Frame f{x0, x1, y0, y1, static_cast<double>(opts.width),
                static_cast<double>(opts.height)};
  auto out = open_svg(path, opts);
  axes(out, f, opts, opts.log_y);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::string d;
    bool pen_down = false;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double y = tr(s.y[i]);
      if (!std::isfinite(s.x[i]) || !std::isfinite(y)) {
        pen_down = false;
        continue;
      }
      d += (pen_down ? " L" : " M") + num(f.px(s.x[i])) + " " + num(f.py(y));
      pen_down = true;
    }
    out << "<path d='" << d << "' fill='none' stroke='" << s.color
        << "' stroke-width='1.5'/>\n";
    const double ly = kMarginTop + 14 + 16.0 * k;
    out << "<line x1='" << f.w - 150 << "' y1='" << ly - 4 << "' x2='"
        << f.w - 130 << "' y2='" << ly - 4 << "' stroke='" << s.color
        << "' stroke-width='2'/>\n"
        << "<text x='" << f.w - 125 << "' y='" << ly << "' font-size='11'>"
        << escape(s.label) << "</text>\n";
  }
  out << "</svg>\n";
}

void write_contour_plot(const std::filesystem::path& path,
                        const std::vector<double>& x,
                        const std::vector<double>& y, const Matrix& values,
                        int levels, const PlotOptions& opts, double marker_x,
                        double marker_y) {
  if (x.size() < 2 || y.size() < 2 ||
      values.rows() != static_cast<Eigen::Index>(y.size()) ||
      values.cols() != static_cast<Eigen::Index>(x.size())) {
    throw std::invalid_argument("write_contour_plot: grid size mismatch");
  }
  double vmin = HUGE_VAL, vmax = -HUGE_VAL;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double v = values.data()[i];
    if (std::isfinite(v)) vmin = std::min(vmin, v), vmax = std::max(vmax, v);
  }
  if (!std::isfinite(vmin)) vmin = 0.0, vmax = 1.0;
  widen(vmin, vmax);
  const Frame f{x.front(), x.back(), y.front(), y.back(),
                static_cast<double>(opts.width), static_cast<double>(opts.height)};
  auto out = open_svg(path, opts);

  // Cells centred on grid points, clipped to the axis box.
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double ylo = i == 0 ? y[0] : 0.5 * (y[i - 1] + y[i]);
    const double yhi = i + 1 == y.size() ? y[i] : 0.5 * (y[i] + y[i + 1]);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double xlo = j == 0 ? x[0] : 0.5 * (x[j - 1] + x[j]);
      const double xhi = j + 1 == x.size() ? x[j] : 0.5 * (x[j] + x[j + 1]);
      const double v = values(i, j);
      const std::string fill =
          std::isfinite(v) ? ramp((v - vmin) / (vmax - vmin)) : "#bbbbbb";
      out << "<rect x='" << num(f.px(xlo)) << "' y='" << num(f.py(yhi))
          << "' width='" << num(f.px(xhi) - f.px(xlo)) << "' height='"
          << num(f.py(ylo) - f.py(yhi)) << "' fill='" << fill
          << "' shape-rendering='crispEdges'/>\n";
    }
  }

  // Levels at quantiles of the finite values, so that the region around the
  // minimum is resolved even when the edges of the grid are much larger.
  std::vector<double> finite;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (std::isfinite(values.data()[i])) finite.push_back(values.data()[i]);
  }
  std::sort(finite.begin(), finite.end());

  // Marching squares on each level; ambiguous saddles are split arbitrarily.
  for (int l = 1; l <= levels && !finite.empty(); ++l) {
    const auto idx = static_cast<std::size_t>(
        (finite.size() - 1) * static_cast<double>(l) / (levels + 1));
    const double c = finite[idx];
    std::string d;
    for (std::size_t i = 0; i + 1 < y.size(); ++i) {
      for (std::size_t j = 0; j + 1 < x.size(); ++j) {
        const double v[4] = {values(i, j), values(i, j + 1),
                             values(i + 1, j + 1), values(i + 1, j)};
        const double cx[4] = {x[j], x[j + 1], x[j + 1], x[j]};
        const double cy[4] = {y[i], y[i], y[i + 1], y[i + 1]};
        if (!std::isfinite(v[0]) || !std::isfinite(v[1]) ||
            !std::isfinite(v[2]) || !std::isfinite(v[3])) {
          continue;
        }
        std::vector<std::pair<double, double>> pts;
        for (int e = 0; e < 4; ++e) {
          const int a = e, b = (e + 1) % 4;
          if ((v[a] < c) != (v[b] < c)) {
            const double t = (c - v[a]) / (v[b] - v[a]);
            pts.emplace_back(cx[a] + t * (cx[b] - cx[a]), cy[a] + t * (cy[b] - cy[a]));
          }
        }
        for (std::size_t p = 0; p + 1 < pts.size(); p += 2) {
          d += " M" + num(f.px(pts[p].first)) + " " + num(f.py(pts[p].second)) +
               " L" + num(f.px(pts[p + 1].first)) + " " +
               num(f.py(pts[p + 1].second));
        }
      }
    }
    if (!d.empty()) {
      out << "<path d='" << d
          << "' fill='none' stroke='black' stroke-width='0.8'/>\n";
    }
  }
  if (std::isfinite(marker_x) && std::isfinite(marker_y)) {
    const double mx = f.px(marker_x), my = f.py(marker_y);
    out << "<path d='M" << num(mx - 6) << " " << num(my - 6) << " L"
        << num(mx + 6) << " " << num(my + 6) << " M" << num(mx - 6) << " "
        << num(my + 6) << " L" << num(mx + 6) << " " << num(my - 6)
        << "' stroke='red' stroke-width='2'/>\n";
  }
  axes(out, f, opts, false);
  out << "</svg>\n";
}

}  // namespace selftune
