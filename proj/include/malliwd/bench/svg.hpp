/*
 * Copyright 2026 The malliwd Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
// Minimal static SVG line charts.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace malliwd::bench {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
};

namespace detail {

inline std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

inline std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axis {
  double lo = 0.0, hi = 1.0;
  bool log = false;

  double map(double v) const {
    const double t = log ? std::log10(v) : v;
    return (t - lo) / (hi - lo);
  }
};

inline Axis fit_axis(const std::vector<double>& values, bool log) {
  Axis a;
  a.log = log;
  double lo = INFINITY, hi = -INFINITY;
  for (double v : values) {
    if (!std::isfinite(v) || (log && v <= 0.0)) continue;
    const double t = log ? std::log10(v) : v;
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  if (!(lo <= hi)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  a.lo = lo - pad;
  a.hi = hi + pad;
  return a;
}

}  // namespace detail

/// Renders every series as a polyline with point markers and a legend.
inline std::string render_line_plot(const PlotSpec& spec) {
  constexpr double width = 640, height = 420, left = 80, right = 20, top = 40, bottom = 60;
  constexpr double pw = width - left - right, ph = height - top - bottom;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  std::vector<double> xs, ys;
  for (const auto& s : spec.series) {
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
  }
  const auto ax = detail::fit_axis(xs, spec.log_x);
  const auto ay = detail::fit_axis(ys, spec.log_y);
  const auto px = [&](double v) { return left + ax.map(v) * pw; };
  const auto py = [&](double v) { return top + (1.0 - ay.map(v)) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
     << detail::escape_xml(spec.title) << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 4; ++i) {
    const double f = i / 4.0;
    const double xv = ax.lo + f * (ax.hi - ax.lo), yv = ay.lo + f * (ay.hi - ay.lo);
    const double gx = left + f * pw, gy = top + (1.0 - f) * ph;
    const std::string xl = detail::fmt("%.3g", ax.log ? std::pow(10.0, xv) : xv);
    const std::string yl = detail::fmt("%.3g", ay.log ? std::pow(10.0, yv) : yv);
    os << "<line x1=\"" << gx << "\" y1=\"" << top << "\" x2=\"" << gx << "\" y2=\"" << top + ph
       << "\" stroke=\"#ddd\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << gy << "\" x2=\"" << left + pw << "\" y2=\"" << gy
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << gx << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << xl
       << "</text>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << gy + 4 << "\" text-anchor=\"end\">" << yl
       << "</text>\n";
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 18 << "\" text-anchor=\"middle\">"
     << detail::escape_xml(spec.x_label) << "</text>\n";
  os << "<text transform=\"translate(18," << top + ph / 2
     << ") rotate(-90)\" text-anchor=\"middle\">" << detail::escape_xml(spec.y_label)
     << "</text>\n";

  for (std::size_t s = 0; s < spec.series.size(); ++s) {
    const auto& ser = spec.series[s];
    const char* color = colors[s % 5];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\""
       << (ser.dashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\"";
    for (std::size_t i = 0; i < ser.x.size() && i < ser.y.size(); ++i) {
      if (!std::isfinite(ser.y[i]) || (spec.log_y && ser.y[i] <= 0.0)) continue;
      os << detail::fmt("%.2f", px(ser.x[i])) << ',' << detail::fmt("%.2f", py(ser.y[i])) << ' ';
    }
    os << "\"/>\n";
    if (!ser.dashed) {
      for (std::size_t i = 0; i < ser.x.size() && i < ser.y.size(); ++i) {
        if (!std::isfinite(ser.y[i]) || (spec.log_y && ser.y[i] <= 0.0)) continue;
        os << "<circle cx=\"" << detail::fmt("%.2f", px(ser.x[i])) << "\" cy=\""
           << detail::fmt("%.2f", py(ser.y[i])) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      }
    }
    const double ly = top + 16 + 16.0 * static_cast<double>(s);
    os << "<line x1=\"" << left + pw - 150 << "\" y1=\"" << ly - 4 << "\" x2=\"" << left + pw - 126
       << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw - 120 << "\" y=\"" << ly << "\">" << detail::escape_xml(ser.name)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace malliwd::bench
