#include "cohesim/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "cohesim/errors.hpp"

namespace cohesim {
namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 66.0;
constexpr double kRight = 18.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 52.0;
constexpr int kTicks = 5;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf"};
constexpr int kPaletteSize = 7;

std::string escape_xml(const std::string& s) {
  std::string out;
  out.reserve(s.size());
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

std::string num(double v, const char* spec = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

Range padded(double lo, double hi) {
  if (!(hi > lo)) {
    double pad = std::max(1.0, std::abs(lo)) * 0.05;
    return {lo - pad, hi + pad};
  }
  double pad = (hi - lo) * 0.05;
  return {lo - pad, hi + pad};
}

}  // namespace

void write_svg_plot(const std::string& path, const PlotSpec& spec) {
  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const PlotSeries& s : spec.series) {
    for (const auto& p : s.points) {
      xmin = std::min(xmin, p[0]);
      xmax = std::max(xmax, p[0]);
      ymin = std::min(ymin, p[1]);
      ymax = std::max(ymax, p[1]);
    }
  }
  if (!(xmin <= xmax)) throw DomainError("plot: no data points");

  const Range xr = padded(xmin, xmax);
  const Range yr = padded(ymin, ymax);
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * plot_w; };
  auto py = [&](double y) { return kTop + plot_h - (y - yr.lo) / (yr.hi - yr.lo) * plot_h; };

  std::ofstream out(path);
  if (!out) throw ConfigError("plot: cannot write " + path);

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << (int)kWidth << "\" height=\""
      << (int)kHeight << "\" viewBox=\"0 0 " << (int)kWidth << " " << (int)kHeight << "\">\n";
  for (const std::string& src : spec.provenance) {
    out << "<!-- source: " << escape_xml(src) << " -->\n";
  }
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << num(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"15\">" << escape_xml(spec.title) << "</text>\n";

  // Frame and ticks.
  out << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(plot_w)
      << "\" height=\"" << num(plot_h) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t < kTicks; ++t) {
    double fx = xr.lo + (xr.hi - xr.lo) * t / (kTicks - 1);
    double fy = yr.lo + (yr.hi - yr.lo) * t / (kTicks - 1);
    double gx = px(fx), gy = py(fy);
    out << "<line x1=\"" << num(gx) << "\" y1=\"" << num(kTop + plot_h) << "\" x2=\"" << num(gx)
        << "\" y2=\"" << num(kTop + plot_h + 5) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << num(gx) << "\" y=\"" << num(kTop + plot_h + 19)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << num(fx, "%.4g") << "</text>\n";
    out << "<line x1=\"" << num(kLeft - 5) << "\" y1=\"" << num(gy) << "\" x2=\"" << num(kLeft)
        << "\" y2=\"" << num(gy) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << num(kLeft - 8) << "\" y=\"" << num(gy + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << num(fy, "%.4g")
        << "</text>\n";
  }
  out << "<text x=\"" << num(kLeft + plot_w / 2) << "\" y=\"" << num(kHeight - 14)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << escape_xml(spec.x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << num(kTop + plot_h / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
      << "transform=\"rotate(-90 16 " << num(kTop + plot_h / 2) << ")\">"
      << escape_xml(spec.y_label) << "</text>\n";

  int color_idx = 0;
  for (const PlotSeries& s : spec.series) {
    std::string color = s.color.empty() ? kPalette[color_idx % kPaletteSize] : s.color;
    ++color_idx;
    if (s.points.empty()) continue;
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < s.points.size(); ++i) {
      if (i) out << ' ';
      out << num(px(s.points[i][0])) << ',' << num(py(s.points[i][1]));
    }
    out << "\"/>\n";
    if (s.points.size() == 1) {
      out << "<circle cx=\"" << num(px(s.points[0][0])) << "\" cy=\"" << num(py(s.points[0][1]))
          << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
  }

  // Legend, top-right corner of the frame.
  double ly = kTop + 14.0;
  color_idx = 0;
  for (const PlotSeries& s : spec.series) {
    std::string color = s.color.empty() ? kPalette[color_idx % kPaletteSize] : s.color;
    ++color_idx;
    if (s.label.empty()) continue;
    double lx = kLeft + plot_w - 150.0;
    out << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(lx + 22)
        << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    out << "<text x=\"" << num(lx + 28) << "\" y=\"" << num(ly)
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape_xml(s.label) << "</text>\n";
    ly += 16.0;
  }

  out << "</svg>\n";
  if (!out.good()) throw ConfigError("plot: write failed: " + path);
}

}  // namespace cohesim
