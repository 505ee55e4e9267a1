#pragma once

// Minimal self-contained SVG line/scatter plots with optional log axes.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "nashevt/io.hpp"

namespace nashevt::runner {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool points = true;
  bool line = false;
  std::string color = "#1f77b4";
};

struct Plot {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  bool logx = false;
  bool logy = false;
  std::vector<PlotSeries> series;
};

namespace detail {

inline std::string escape_xml(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

inline std::string tick_label(double v, bool log) {
  if (log) return "1e" + io::format_fixed(v, std::abs(v - std::round(v)) < 1e-9 ? 0 : 1);
  const double a = std::abs(v);
  return io::format_fixed(v, a >= 100 ? 0 : a >= 1 ? 2 : 3);
}

}  // namespace detail

inline std::string render_svg(const Plot& plot) {
  constexpr double W = 640, H = 440, L = 70, R = 160, T = 40, B = 55;
  auto tx = [&](double v) { return plot.logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return plot.logy ? std::log10(v) : v; };
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!plot.logx || x > 0) && (!plot.logy || y > 0);
  };

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : plot.series)
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
      if (!usable(s.x[k], s.y[k])) continue;
      x0 = std::min(x0, tx(s.x[k]));
      x1 = std::max(x1, tx(s.x[k]));
      y0 = std::min(y0, ty(s.y[k]));
      y1 = std::max(y1, ty(s.y[k]));
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double padx = 0.05 * (x1 - x0), pady = 0.05 * (y1 - y0);
  x0 -= padx, x1 += padx, y0 -= pady, y1 += pady;

  auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };
  auto f = [](double v) { return io::format_fixed(v, 2); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << f(W / 2) << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
     << detail::escape_xml(plot.title) << "</text>\n";
  os << "<rect x=\"" << f(L) << "\" y=\"" << f(T) << "\" width=\"" << f(W - L - R) << "\" height=\"" << f(H - T - B)
     << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int k = 0; k <= 4; ++k) {
    const double vx = x0 + (x1 - x0) * k / 4.0;
    const double vy = y0 + (y1 - y0) * k / 4.0;
    os << "<text x=\"" << f(px(vx)) << "\" y=\"" << f(H - B + 16)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
       << detail::tick_label(vx, plot.logx) << "</text>\n";
    os << "<text x=\"" << f(L - 6) << "\" y=\"" << f(py(vy) + 3)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << detail::tick_label(vy, plot.logy)
       << "</text>\n";
  }
  os << "<text x=\"" << f(L + (W - L - R) / 2) << "\" y=\"" << f(H - 12)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << detail::escape_xml(plot.xlabel)
     << (plot.logx ? " (log)" : "") << "</text>\n";
  os << "<text x=\"16\" y=\"" << f(T + (H - T - B) / 2) << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
     << "font-size=\"12\" transform=\"rotate(-90 16 " << f(T + (H - T - B) / 2) << ")\">"
     << detail::escape_xml(plot.ylabel) << (plot.logy ? " (log)" : "") << "</text>\n";

  double legend_y = T + 12;
  for (const auto& s : plot.series) {
    std::string path;
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
      if (!usable(s.x[k], s.y[k])) continue;
      const double cx = px(tx(s.x[k])), cy = py(ty(s.y[k]));
      if (s.line) path += (path.empty() ? "M" : " L") + f(cx) + "," + f(cy);
      if (s.points)
        os << "<circle cx=\"" << f(cx) << "\" cy=\"" << f(cy) << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
    }
    if (s.line && !path.empty())
      os << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"/>\n";
    if (s.name.empty()) continue;
    os << "<rect x=\"" << f(W - R + 10) << "\" y=\"" << f(legend_y - 8) << "\" width=\"10\" height=\"10\" fill=\""
       << s.color << "\"/>\n";
    os << "<text x=\"" << f(W - R + 25) << "\" y=\"" << f(legend_y + 1)
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << detail::escape_xml(s.name) << "</text>\n";
    legend_y += 16;
  }
  os << "</svg>\n";
  return os.str();
}

inline const char* palette(std::size_t k) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  return colors[k % 7];
}

}  // namespace nashevt::runner
