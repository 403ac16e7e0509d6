#pragma once

#include <span>
#include <string>

#include "deltalab/common.hpp"

namespace deltalab {

struct Series {
  std::string label;
  Vec x;
  Vec y;
};

struct ChartLabels {
  std::string title;
  std::string x_axis;
  std::string y_axis;
};

/// One <polyline> per series, one point per sample. Output bytes depend only
/// on the inputs.
std::string line_chart_svg(std::span<const Series> series, const ChartLabels& labels);

/// One <circle> per point, plus the y = x reference line.
std::string scatter_svg(std::span<const Series> series, const ChartLabels& labels);

}  // namespace deltalab
