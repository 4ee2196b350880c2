// Copyright 2026 The SMAE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal SVG figures: line plots, relevance heat strips, 2D scatter, bars.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace smae::svg {

inline constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

inline std::string color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

inline std::string escape(const std::string& s) {
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

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// Blue (0) to red (1) through white.
inline std::string heat(double t) {
  t = std::clamp(t, 0.0, 1.0);
  int r, g, b;
  if (t < 0.5) {
    const double u = t / 0.5;
    r = static_cast<int>(49 + u * (255 - 49));
    g = static_cast<int>(54 + u * (255 - 54));
    b = static_cast<int>(149 + u * (255 - 149));
  } else {
    const double u = (t - 0.5) / 0.5;
    r = static_cast<int>(255 - u * (255 - 165));
    g = static_cast<int>(255 - u * 255);
    b = static_cast<int>(255 - u * (255 - 38));
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

struct Series {
  std::string name;
  std::vector<double> y;
  std::vector<double> x;  // empty: 0, 1, 2, ...
};

struct Frame {
  double width = 640, height = 360;
  double left = 60, right = 20, top = 36, bottom = 44;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

  double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }

  void fit(double xmin, double xmax, double ymin, double ymax) {
    if (!(xmax > xmin)) xmax = xmin + 1;
    if (!(ymax > ymin)) ymax = ymin + 1;
    const double pad = 0.05 * (ymax - ymin);
    x0 = xmin, x1 = xmax, y0 = ymin - pad, y1 = ymax + pad;
  }
};

inline void open(std::ostringstream& o, const Frame& f, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << f.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
    << "</text>\n";
}

inline void axes(std::ostringstream& o, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  o << "<g stroke=\"black\" fill=\"none\"><rect x=\"" << f.left << "\" y=\"" << f.top << "\" width=\""
    << f.width - f.left - f.right << "\" height=\"" << f.height - f.top - f.bottom << "\"/></g>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0, yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    o << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << num(f.height - f.bottom + 14)
      << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
    o << "<text x=\"" << num(f.left - 4) << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\">" << num(yv)
      << "</text>\n";
  }
  o << "<text x=\"" << f.width / 2 << "\" y=\"" << f.height - 8 << "\" text-anchor=\"middle\">" << escape(xlabel)
    << "</text>\n";
  o << "<text transform=\"translate(14," << f.height / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(ylabel) << "</text>\n";
}

inline void legend(std::ostringstream& o, const Frame& f, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = f.top + 12 + 14 * static_cast<double>(i);
    o << "<rect x=\"" << f.width - f.right - 110 << "\" y=\"" << y - 8 << "\" width=\"10\" height=\"10\" fill=\""
      << color(i) << "\"/><text x=\"" << f.width - f.right - 96 << "\" y=\"" << y << "\">" << escape(names[i])
      << "</text>\n";
  }
}

inline void polyline(std::ostringstream& o, const Frame& f, const Series& s, const std::string& stroke) {
  o << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.2\" points=\"";
  for (std::size_t i = 0; i < s.y.size(); ++i) {
    if (!std::isfinite(s.y[i])) continue;
    const double x = s.x.empty() ? static_cast<double>(i) : s.x[i];
    o << num(f.px(x)) << ',' << num(f.py(s.y[i])) << ' ';
  }
  o << "\"/>\n";
}

inline std::string line_plot(const std::vector<Series>& series, const std::string& title,
                             const std::string& xlabel, const std::string& ylabel) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      const double x = s.x.empty() ? static_cast<double>(i) : s.x[i];
      xmin = std::min(xmin, x), xmax = std::max(xmax, x);
      ymin = std::min(ymin, s.y[i]), ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  Frame f;
  f.fit(xmin, xmax, ymin, ymax);
  std::ostringstream o;
  open(o, f, title);
  axes(o, f, xlabel, ylabel);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    polyline(o, f, series[k], color(k));
    names.push_back(series[k].name);
  }
  legend(o, f, names);
  o << "</svg>\n";
  return o.str();
}

/// A spectrum drawn over a background coloured by per-wavelength relevance.
inline std::string heat_strip(std::span<const double> spectrum, std::span<const double> relevance,
                              const std::string& title) {
  Frame f;
  double lo = spectrum.empty() ? 0 : *std::min_element(spectrum.begin(), spectrum.end());
  double hi = spectrum.empty() ? 1 : *std::max_element(spectrum.begin(), spectrum.end());
  f.fit(0, static_cast<double>(std::max<std::size_t>(spectrum.size(), 2) - 1), lo, hi);
  std::ostringstream o;
  open(o, f, title);
  const double w = (f.width - f.left - f.right) / static_cast<double>(std::max<std::size_t>(relevance.size(), 1));
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    o << "<rect x=\"" << num(f.left + w * static_cast<double>(i)) << "\" y=\"" << f.top << "\" width=\""
      << num(w + 0.5) << "\" height=\"" << f.height - f.top - f.bottom << "\" fill=\"" << heat(relevance[i])
      << "\"/>\n";
  }
  axes(o, f, "wavelength index", "intensity");
  polyline(o, f, Series{"spectrum", {spectrum.begin(), spectrum.end()}, {}}, "black");
  o << "</svg>\n";
  return o.str();
}

inline std::string scatter(std::span<const double> x, std::span<const double> y, std::span<const std::size_t> group,
                           const std::vector<std::string>& names, const std::string& title) {
  Frame f;
  auto [xl, xh] = std::minmax_element(x.begin(), x.end());
  auto [yl, yh] = std::minmax_element(y.begin(), y.end());
  if (x.empty()) {
    f.fit(0, 1, 0, 1);
  } else {
    f.fit(*xl, *xh, *yl, *yh);
  }
  std::ostringstream o;
  open(o, f, title);
  axes(o, f, "PC1", "PC2");
  for (std::size_t i = 0; i < x.size(); ++i) {
    o << "<circle cx=\"" << num(f.px(x[i])) << "\" cy=\"" << num(f.py(y[i])) << "\" r=\"2.5\" fill=\""
      << color(group.empty() ? 0 : group[i]) << "\" fill-opacity=\"0.7\"/>\n";
  }
  legend(o, f, names);
  o << "</svg>\n";
  return o.str();
}

inline std::string bars(const std::vector<std::string>& labels, std::span<const double> values,
                        const std::string& title, const std::string& ylabel) {
  Frame f;
  double hi = values.empty() ? 1.0 : *std::max_element(values.begin(), values.end());
  f.fit(0, static_cast<double>(std::max<std::size_t>(values.size(), 1)), 0, std::max(hi, 1e-12));
  f.y0 = 0;
  std::ostringstream o;
  open(o, f, title);
  o << "<g stroke=\"black\" fill=\"none\"><rect x=\"" << f.left << "\" y=\"" << f.top << "\" width=\""
    << f.width - f.left - f.right << "\" height=\"" << f.height - f.top - f.bottom << "\"/></g>\n";
  const double slot = (f.width - f.left - f.right) / static_cast<double>(std::max<std::size_t>(values.size(), 1));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = f.left + slot * (static_cast<double>(i) + 0.15);
    const double top = f.py(values[i]);
    o << "<rect x=\"" << num(x) << "\" y=\"" << num(top) << "\" width=\"" << num(slot * 0.7) << "\" height=\""
      << num(f.py(0) - top) << "\" fill=\"" << color(i) << "\"/>\n";
    o << "<text x=\"" << num(x + slot * 0.35) << "\" y=\"" << num(top - 4) << "\" text-anchor=\"middle\">"
      << num(values[i]) << "</text>\n";
    o << "<text x=\"" << num(x + slot * 0.35) << "\" y=\"" << num(f.height - f.bottom + 14)
      << "\" text-anchor=\"middle\">" << escape(i < labels.size() ? labels[i] : "") << "</text>\n";
  }
  o << "<text transform=\"translate(14," << f.height / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(ylabel) << "</text>\n</svg>\n";
  return o.str();
}

}  // namespace smae::svg
