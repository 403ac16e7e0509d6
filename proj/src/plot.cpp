#include "deltalab/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace deltalab {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 170.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 55.0;

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (lo > hi) lo = 0.0, hi = 1.0;
    if (lo == hi) lo -= 0.5, hi += 0.5;
  }
};

struct Frame {
  Range x, y;

  double px(double v) const { return kLeft + (v - x.lo) / (x.hi - x.lo) * (kWidth - kLeft - kRight); }
  double py(double v) const { return kHeight - kBottom - (v - y.lo) / (y.hi - y.lo) * (kHeight - kTop - kBottom); }
};

Frame frame_for(std::span<const Series> series, bool square) {
  Frame f;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw Error("plot: series '" + s.label + "' has mismatched x/y lengths");
    for (double v : s.x) f.x.add(v);
    for (double v : s.y) f.y.add(v);
  }
  if (square) {
    f.x.add(f.y.lo), f.x.add(f.y.hi);
    f.y = f.x;
  }
  f.x.finish();
  f.y.finish();
  return f;
}

std::string header(const Frame& f, const ChartLabels& labels) {
  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" + fmt(kHeight) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + fmt(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         escape(labels.title) + "</text>\n";
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  out += "<g stroke=\"black\" fill=\"none\">";
  out += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(y0) + "\" x2=\"" + fmt(x1) + "\" y2=\"" + fmt(y0) + "\"/>";
  out += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(y0) + "\" x2=\"" + fmt(x0) + "\" y2=\"" + fmt(y1) + "\"/>";
  out += "</g>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x.lo + (f.x.hi - f.x.lo) * i / 4.0;
    const double yv = f.y.lo + (f.y.hi - f.y.lo) * i / 4.0;
    out += "<text x=\"" + fmt(f.px(xv)) + "\" y=\"" + fmt(y0 + 16) + "\" text-anchor=\"middle\">" + tick_label(xv) +
           "</text>";
    out += "<text x=\"" + fmt(x0 - 6) + "\" y=\"" + fmt(f.py(yv) + 4) + "\" text-anchor=\"end\">" + tick_label(yv) +
           "</text>\n";
  }
  out += "<text x=\"" + fmt((x0 + x1) / 2) + "\" y=\"" + fmt(kHeight - 15) + "\" text-anchor=\"middle\">" +
         escape(labels.x_axis) + "</text>\n";
  out += "<text x=\"18\" y=\"" + fmt((y0 + y1) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         fmt((y0 + y1) / 2) + ")\">" + escape(labels.y_axis) + "</text>\n";
  return out;
}

std::string legend(std::span<const Series> series) {
  std::string out;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kTop + 10 + 18.0 * static_cast<double>(i);
    const double x = kWidth - kRight + 12;
    out += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y - 9) + "\" width=\"12\" height=\"10\" fill=\"" +
           kPalette[i % std::size(kPalette)] + "\"/>";
    out += "<text x=\"" + fmt(x + 18) + "\" y=\"" + fmt(y) + "\">" + escape(series[i].label) + "</text>\n";
  }
  return out;
}

}  // namespace

std::string line_chart_svg(std::span<const Series> series, const ChartLabels& labels) {
  const Frame f = frame_for(series, false);
  std::string out = header(f, labels);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& s = series[i];
    std::string points;
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      if (!points.empty()) points += ' ';
      points += fmt(f.px(s.x[k])) + "," + fmt(f.py(s.y[k]));
    }
    out += "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" + std::string(kPalette[i % std::size(kPalette)]) +
           "\" points=\"" + points + "\"/>\n";
  }
  out += legend(series);
  out += "</svg>\n";
  return out;
}

std::string scatter_svg(std::span<const Series> series, const ChartLabels& labels) {
  const Frame f = frame_for(series, true);
  std::string out = header(f, labels);
  out += "<line stroke=\"#999\" stroke-dasharray=\"4 3\" x1=\"" + fmt(f.px(f.x.lo)) + "\" y1=\"" + fmt(f.py(f.x.lo)) +
         "\" x2=\"" + fmt(f.px(f.x.hi)) + "\" y2=\"" + fmt(f.py(f.x.hi)) + "\"/>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& s = series[i];
    const std::string color = kPalette[i % std::size(kPalette)];
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      out += "<circle r=\"2\" fill=\"" + color + "\" cx=\"" + fmt(f.px(s.x[k])) + "\" cy=\"" + fmt(f.py(s.y[k])) +
             "\"/>\n";
    }
  }
  out += legend(series);
  out += "</svg>\n";
  return out;
}

}  // namespace deltalab
