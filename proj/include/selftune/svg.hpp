#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "selftune/types.hpp"

namespace selftune {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  /// Plot log10(y); non-positive values are dropped.
  bool log_y = false;
  int width = 640;
  int height = 420;
};

/// Line chart with axes, tick labels and a legend. Non-finite points break
/// the polyline.
void write_line_plot(const std::filesystem::path& path,
                     const std::vector<PlotSeries>& series,
                     const PlotOptions& opts);

/// Heat map of values(i, j) at (x[j], y[i]) with `levels` iso-lines (at
/// quantiles of the values) traced by marching squares. NaN cells are drawn
/// grey and skipped by the contours. `marker_x`, `marker_y` (when finite) place a cross, e.g. at a minimizer.
void write_contour_plot(const std::filesystem::path& path,
                        const std::vector<double>& x,
                        const std::vector<double>& y, const Matrix& values,
                        int levels, const PlotOptions& opts,
                        double marker_x, double marker_y);

}  // namespace selftune
