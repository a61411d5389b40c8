#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "resflow/errors.hpp"

namespace resflow::io {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                          "#9467bd", "#ff7f0e", "#8c564b"};

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-300) lo -= 0.5, hi += 0.5;
  }
};

}  // namespace detail

/// Line chart of one or more series.
inline void write_line_svg(const std::filesystem::path& path, const std::string& title,
                           const std::string& xlabel, const std::string& ylabel,
                           const std::vector<Series>& series) {
  constexpr double W = 640, H = 420, L = 70, R = 150, Tm = 40, B = 50;
  detail::Range xr, yr;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ConfigurationError("svg series length mismatch");
    for (double v : s.x) xr.add(v);
    for (double v : s.y) yr.add(v);
  }
  xr.pad();
  yr.pad();
  auto px = [&](double x) { return L + (x - xr.lo) / (xr.hi - xr.lo) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - yr.lo) / (yr.hi - yr.lo) * (H - Tm - B); };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigurationError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n"
      << "<rect x=\"" << L << "\" y=\"" << Tm << "\" width=\"" << W - L - R << "\" height=\""
      << H - Tm - B << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xr.lo + (xr.hi - xr.lo) * k / 4.0;
    const double yv = yr.lo + (yr.hi - yr.lo) * k / 4.0;
    out << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
        << detail::num(xv) << "</text>\n"
        << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
        << detail::num(yv) << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
      << xlabel << "</text>\n"
      << "<text x=\"16\" y=\"" << (Tm + H - B) / 2 << "\" transform=\"rotate(-90 16 "
      << (Tm + H - B) / 2 << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = detail::kPalette[s % std::size(detail::kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (!std::isfinite(series[s].y[i])) continue;
      out << detail::num(px(series[s].x[i])) << ',' << detail::num(py(series[s].y[i])) << ' ';
    }
    out << "\"/>\n<text x=\"" << W - R + 10 << "\" y=\"" << Tm + 16 + 18 * s << "\" fill=\""
        << color << "\">" << series[s].label << "</text>\n";
  }
  out << "</svg>\n";
}

/// Heatmap of a row-major nx-by-ny field (x fastest) with a grey-to-blue scale.
inline void write_heatmap_svg(const std::filesystem::path& path, const std::string& title,
                              std::size_t nx, std::size_t ny, const std::vector<double>& values,
                              bool log_scale = false) {
  if (values.size() != nx * ny || nx == 0 || ny == 0) {
    throw ConfigurationError("heatmap field size mismatch");
  }
  constexpr double W = 520, H = 520, M = 40;
  auto map = [&](double v) { return log_scale ? std::log10(std::max(v, 1e-300)) : v; };
  detail::Range r;
  for (double v : values) r.add(map(v));
  r.pad();
  const double cw = (W - 2 * M) / static_cast<double>(nx);
  const double ch = (H - 2 * M) / static_cast<double>(ny);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigurationError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << title
      << " [" << detail::num(r.lo) << ", " << detail::num(r.hi) << (log_scale ? "] log10" : "]")
      << "</text>\n";
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const double v = map(values[j * nx + i]);
      const double s = std::isfinite(v) ? (v - r.lo) / (r.hi - r.lo) : 0.0;
      const int red = static_cast<int>(240 - 200 * s);
      const int green = static_cast<int>(240 - 150 * s);
      out << "<rect x=\"" << detail::num(M + cw * static_cast<double>(i)) << "\" y=\""
          << detail::num(H - M - ch * static_cast<double>(j + 1)) << "\" width=\""
          << detail::num(cw) << "\" height=\"" << detail::num(ch) << "\" fill=\"rgb(" << red
          << ',' << green << ",255)\"/>\n";
    }
  }
  out << "</svg>\n";
}

}  // namespace resflow::io
