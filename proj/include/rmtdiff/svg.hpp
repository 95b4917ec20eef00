#pragma once

// Static SVG line plots of CSV columns. Presentation only.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "rmtdiff/report.hpp"

namespace rmtdiff::svg {

struct Series {
  std::string name;
  std::vector<double> x, y;
  bool markers_only = false;
};

struct PlotSpec {
  std::string title, xlabel, ylabel;
  bool logx = false, logy = false;
};

namespace detail {

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  return palette[i % 7];
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace detail

inline std::string render(const PlotSpec& spec, const std::vector<Series>& series) {
  const double W = 640, H = 440, L = 70, R = 150, T = 40, B = 55;
  auto tx = [&](double v) { return spec.logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return spec.logy ? std::log10(v) : v; };
  auto ok = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!spec.logx || x > 0) && (!spec.logy || y > 0);
  };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (ok(s.x[i], s.y[i])) {
        x0 = std::min(x0, tx(s.x[i]));
        x1 = std::max(x1, tx(s.x[i]));
        y0 = std::min(y0, ty(s.y[i]));
        y1 = std::max(y1, ty(s.y[i]));
      }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << spec.title << "</text>\n";
  o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
    const double sx = L + (W - L - R) * i / 4.0, sy = H - B - (H - T - B) * i / 4.0;
    o << "<text x=\"" << sx << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
      << detail::num(spec.logx ? std::pow(10.0, fx) : fx) << "</text>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << sy + 4 << "\" text-anchor=\"end\">"
      << detail::num(spec.logy ? std::pow(10.0, fy) : fy) << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << spec.xlabel << "</text>\n";
  o << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (T + H - B) / 2
    << ")\">" << spec.ylabel << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    if (s.markers_only) {
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (ok(s.x[i], s.y[i]))
          o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"2.5\" fill=\"" << detail::color(si) << "\"/>\n";
    } else {
      o << "<polyline fill=\"none\" stroke=\"" << detail::color(si) << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (ok(s.x[i], s.y[i])) o << px(s.x[i]) << "," << py(s.y[i]) << " ";
      o << "\"/>\n";
    }
    o << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 14 + 16 * si << "\" fill=\"" << detail::color(si) << "\">" << s.name
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

inline void write_plot(const std::filesystem::path& path, const PlotSpec& spec, const std::vector<Series>& series) {
  write_text_file(path, render(spec, series));
}

/// Theory line and Monte-Carlo markers from a mode table.
inline std::vector<Series> mode_table_series(const std::vector<ModeRow>& rows, const std::string& what) {
  Series th{what + " theory", {}, {}, false}, mc{what + " MC", {}, {}, true};
  for (const auto& r : rows) {
    th.x.push_back(r.lambda);
    th.y.push_back(r.theory);
    mc.x.push_back(r.lambda);
    mc.y.push_back(r.mc);
  }
  return {th, mc};
}

}  // namespace rmtdiff::svg
