#include "dgrl/plot.hpp"

#include "dgrl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

namespace dgrl::plot {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};

std::string f3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s = buf;
  if (s == "-0.000") s = "0.000";
  return s;
}

std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v == 0.0 ? 0.0 : v);
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

struct Curve {
  std::string label;
  std::vector<double> xs;
  std::vector<double> mean;
  std::vector<double> lo;
  std::vector<double> hi;
};

Curve build_curve(const PlotSeries& s, const PlotSpec& spec, double& raw_min, double& raw_max) {
  Curve c;
  c.label = s.label;
  const auto xs = s.table.numeric(spec.x);
  const auto ys = s.table.numeric(spec.y);
  std::vector<double> seeds(xs.size(), 0.0);
  if (s.table.column("seed") >= 0) seeds = s.table.numeric("seed");
  std::map<double, std::vector<std::pair<double, double>>> by_seed;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    by_seed[seeds[i]].emplace_back(xs[i], ys[i]);
    raw_min = std::min(raw_min, ys[i]);
    raw_max = std::max(raw_max, ys[i]);
  }
  std::map<double, std::vector<double>> at_x;
  for (auto& [seed, pts] : by_seed) {
    std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double window_sum = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      window_sum += pts[i].second;
      if (i >= static_cast<std::size_t>(spec.smooth)) window_sum -= pts[i - static_cast<std::size_t>(spec.smooth)].second;
      const auto count = std::min<std::size_t>(i + 1, static_cast<std::size_t>(spec.smooth));
      at_x[pts[i].first].push_back(window_sum / static_cast<double>(count));
    }
  }
  for (const auto& [x, vals] : at_x) {
    double sum = 0.0;
    for (double v : vals) sum += v;
    c.xs.push_back(x);
    c.mean.push_back(sum / static_cast<double>(vals.size()));
    c.lo.push_back(*std::min_element(vals.begin(), vals.end()));
    c.hi.push_back(*std::max_element(vals.begin(), vals.end()));
  }
  return c;
}

}  // namespace

std::string render_svg(std::span<const PlotSeries> series, const PlotSpec& spec, PlotSummary* summary) {
  if (spec.smooth < 1) throw ConfigError("plot.smooth must be >= 1");
  PlotSummary sum;
  std::vector<std::string> problems;
  for (const auto& s : series) {
    if (s.table.rows.empty() && s.table.header.empty()) continue;
    const auto missing = s.table.missing_columns({spec.x, spec.y});
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      problems.push_back(s.label + " is missing columns: " + list);
    }
  }
  if (!problems.empty()) {
    std::string msg = "plot: schema mismatch;";
    for (const auto& p : problems) msg += " " + p + ";";
    throw ConfigError(msg);
  }

  double raw_min = std::numeric_limits<double>::infinity();
  double raw_max = -std::numeric_limits<double>::infinity();
  std::vector<Curve> curves;
  for (const auto& s : series) {
    if (s.table.rows.empty()) continue;
    curves.push_back(build_curve(s, spec, raw_min, raw_max));
  }

  const int w = spec.width;
  const int h = spec.height;
  const double left = 60, right = 150, top = 30, bottom = 45;
  const double pw = w - left - right;
  const double ph = h - top - bottom;
  std::string svg;
  auto header = [&](const std::string& attrs) {
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
           std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " + std::to_string(h) + "\"" + attrs +
           ">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(w) + "\" height=\"" + std::to_string(h) +
           "\" fill=\"white\"/>\n";
    if (!spec.title.empty()) {
      svg += "<text x=\"" + f3(w / 2.0) + "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"14\">" + escape(spec.title) + "</text>\n";
    }
  };

  if (curves.empty()) {
    header(" data-empty=\"true\"");
    svg += "<text class=\"warning\" x=\"" + f3(w / 2.0) + "\" y=\"" + f3(h / 2.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" fill=\"#b00\">"
           "warning: no data rows to plot</text>\n</svg>\n";
    if (summary) *summary = sum;
    return svg;
  }

  double x_min = std::numeric_limits<double>::infinity();
  double x_max = -std::numeric_limits<double>::infinity();
  double y_min = raw_min;
  double y_max = raw_max;
  for (const auto& c : curves) {
    x_min = std::min(x_min, c.xs.front());
    x_max = std::max(x_max, c.xs.back());
    y_min = std::min(y_min, *std::min_element(c.lo.begin(), c.lo.end()));
    y_max = std::max(y_max, *std::max_element(c.hi.begin(), c.hi.end()));
  }
  if (x_max == x_min) x_max = x_min + 1.0;
  const double pad = (y_max > y_min ? (y_max - y_min) : std::max(1.0, std::abs(y_max))) * 0.05;
  const double a_min = y_min - pad;
  const double a_max = y_max + pad;
  sum.empty = false;
  sum.legend_entries = static_cast<int>(curves.size());
  sum.data_min = raw_min;
  sum.data_max = raw_max;
  sum.axis_min = a_min;
  sum.axis_max = a_max;

  auto px = [&](double x) { return left + (x - x_min) / (x_max - x_min) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - a_min) / (a_max - a_min)) * ph; };

  header(" data-empty=\"false\" data-ymin=\"" + g6(a_min) + "\" data-ymax=\"" + g6(a_max) +
         "\" data-raw-ymin=\"" + g6(raw_min) + "\" data-raw-ymax=\"" + g6(raw_max) + "\"");
  svg += "<g class=\"axes\" stroke=\"#333\" stroke-width=\"1\">\n";
  svg += "<line x1=\"" + f3(left) + "\" y1=\"" + f3(top + ph) + "\" x2=\"" + f3(left + pw) + "\" y2=\"" +
         f3(top + ph) + "\"/>\n";
  svg += "<line x1=\"" + f3(left) + "\" y1=\"" + f3(top) + "\" x2=\"" + f3(left) + "\" y2=\"" + f3(top + ph) +
         "\"/>\n</g>\n";
  svg += "<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#333\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = a_min + (a_max - a_min) * i / 4.0;
    const double xv = x_min + (x_max - x_min) * i / 4.0;
    svg += "<text x=\"" + f3(left - 4) + "\" y=\"" + f3(py(yv) + 3) + "\" text-anchor=\"end\">" + g6(yv) + "</text>\n";
    svg += "<text x=\"" + f3(px(xv)) + "\" y=\"" + f3(top + ph + 14) + "\" text-anchor=\"middle\">" + g6(xv) +
           "</text>\n";
  }
  svg += "<text x=\"" + f3(left + pw / 2) + "\" y=\"" + f3(h - 8.0) + "\" text-anchor=\"middle\">" +
         escape(spec.x) + "</text>\n";
  svg += "<text x=\"14\" y=\"" + f3(top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         f3(top + ph / 2) + ")\">" + escape(spec.y) + "</text>\n</g>\n";

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i];
    const std::string color = kPalette[i % (sizeof kPalette / sizeof kPalette[0])];
    std::string band;
    for (std::size_t k = 0; k < c.xs.size(); ++k) band += f3(px(c.xs[k])) + "," + f3(py(c.hi[k])) + " ";
    for (std::size_t k = c.xs.size(); k-- > 0;) band += f3(px(c.xs[k])) + "," + f3(py(c.lo[k])) + " ";
    band.pop_back();
    svg += "<polygon class=\"band\" points=\"" + band + "\" fill=\"" + color +
           "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    std::string line;
    for (std::size_t k = 0; k < c.xs.size(); ++k) {
      line += (k ? " " : "") + f3(px(c.xs[k])) + "," + f3(py(c.mean[k]));
    }
    svg += "<polyline class=\"curve\" points=\"" + line + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"1.5\"/>\n";
  }
  svg += "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const std::string color = kPalette[i % (sizeof kPalette / sizeof kPalette[0])];
    const double ly = top + 10 + 18.0 * static_cast<double>(i);
    svg += "<g class=\"legend-entry\"><rect x=\"" + f3(left + pw + 12) + "\" y=\"" + f3(ly - 8) +
           "\" width=\"12\" height=\"10\" fill=\"" + color + "\"/><text x=\"" + f3(left + pw + 30) + "\" y=\"" +
           f3(ly) + "\">" + escape(curves[i].label) + "</text></g>\n";
  }
  svg += "</g>\n</svg>\n";
  if (summary) *summary = sum;
  return svg;
}

PlotSummary emit_plot(std::span<const PlotSeries> series, const PlotSpec& spec,
                      const std::filesystem::path& out) {
  PlotSummary s;
  const auto svg = render_svg(series, spec, &s);
  io::write_text_file(out, svg);
  return s;
}

}  // namespace dgrl::plot
