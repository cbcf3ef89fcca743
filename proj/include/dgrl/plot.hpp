#pragma once

// Deterministic SVG learning curves: one line per labelled input, a shaded
// min-max band across seeds, and the plotted range recorded as attributes
// on the root element.

#include "dgrl/csv.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dgrl::plot {

struct PlotSeries {
  std::string label;
  io::CsvTable table;
};

struct PlotSpec {
  std::string x = "episode";
  std::string y = "return_ext";
  int smooth = 10;  // trailing moving-average window
  std::string title;
  int width = 640;
  int height = 400;
};

struct PlotSummary {
  bool empty = true;
  int legend_entries = 0;
  double data_min = 0.0;  // raw y values
  double data_max = 0.0;
  double axis_min = 0.0;  // rendered y range
  double axis_max = 0.0;
};

// Throws ConfigError listing the missing columns of any non-empty input.
std::string render_svg(std::span<const PlotSeries> series, const PlotSpec& spec,
                       PlotSummary* summary = nullptr);

PlotSummary emit_plot(std::span<const PlotSeries> series, const PlotSpec& spec,
                      const std::filesystem::path& out);

}  // namespace dgrl::plot
