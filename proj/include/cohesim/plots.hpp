#pragma once

#include <array>
#include <string>
#include <vector>

namespace cohesim {

/// One polyline on a plot. Colors come from a fixed palette when empty.
struct PlotSeries {
  std::string label;
  std::vector<std::array<double, 2>> points;
  std::string color;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  /// Source files the data came from; embedded as comments so a reader can
  /// trace any curve back to its CSV.
  std::vector<std::string> provenance;
};

/// Renders the spec as a standalone SVG: axes, tick labels, legend, one
/// polyline per series. Deterministic output for identical input.
/// Throws ConfigError when the file cannot be written and DomainError when
/// every series is empty.
void write_svg_plot(const std::string& path, const PlotSpec& spec);

}  // namespace cohesim
