/*
 * Copyright 2026 The CARD Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

// Minimal static SVG charts for batch reports.
namespace card::plot {

struct Series {
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

constexpr double kWidth = 640, kHeight = 400, kMargin = 50;

struct Frame {
  double x0, x1, y0, y1;
  double Px(double x) const { return kMargin + (x - x0) / (x1 - x0) * (kWidth - 2 * kMargin); }
  double Py(double y) const {
    return kHeight - kMargin - (y - y0) / (y1 - y0) * (kHeight - 2 * kMargin);
  }
};

inline Frame FitFrame(const std::vector<Series>& series) {
  Frame f{1e300, -1e300, 1e300, -1e300};
  for (const auto& s : series) {
    for (double v : s.x) f.x0 = std::min(f.x0, v), f.x1 = std::max(f.x1, v);
    for (double v : s.y) f.y0 = std::min(f.y0, v), f.y1 = std::max(f.y1, v);
  }
  if (f.x0 > f.x1) f = {0, 1, 0, 1};
  if (f.x1 - f.x0 < 1e-12) f.x1 = f.x0 + 1;
  if (f.y1 - f.y0 < 1e-12) f.y1 = f.y0 + 1;
  return f;
}

inline std::string Header(const std::string& title, const Frame& f, const std::string& xlabel,
                          const std::string& ylabel) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
    << "</text>\n"
    << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\"" << kWidth - kMargin
    << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin << "\" y2=\""
    << kHeight - kMargin << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">"
    << xlabel << "</text>\n"
    << "<text x=\"14\" y=\"" << kHeight / 2 << "\" transform=\"rotate(-90 14 " << kHeight / 2
    << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    o << "<text x=\"" << f.Px(xv) << "\" y=\"" << kHeight - kMargin + 15
      << "\" text-anchor=\"middle\">" << xv << "</text>\n";
    o << "<text x=\"" << kMargin - 5 << "\" y=\"" << f.Py(yv) + 4 << "\" text-anchor=\"end\">" << yv
      << "</text>\n";
  }
  return o.str();
}

inline std::string Legend(const std::vector<Series>& series) {
  std::ostringstream o;
  double y = kMargin;
  for (const auto& s : series) {
    o << "<rect x=\"" << kWidth - kMargin - 120 << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
      << s.color << "\"/><text x=\"" << kWidth - kMargin - 105 << "\" y=\"" << y << "\">" << s.label
      << "</text>\n";
    y += 16;
  }
  return o.str();
}

inline void Write(const std::filesystem::path& path, const std::string& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << body << "</svg>\n";
}

}  // namespace detail

inline void LinePlot(const std::filesystem::path& path, const std::string& title,
                     const std::vector<Series>& series, const std::string& xlabel,
                     const std::string& ylabel) {
  const auto f = detail::FitFrame(series);
  std::string body = detail::Header(title, f, xlabel, ylabel);
  for (const auto& s : series) {
    std::ostringstream o;
    o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << f.Px(s.x[i]) << ',' << f.Py(s.y[i]) << ' ';
    o << "\"/>\n";
    body += o.str();
  }
  detail::Write(path, body + detail::Legend(series));
}

inline void ScatterPlot(const std::filesystem::path& path, const std::string& title,
                        const std::vector<Series>& series, const std::string& xlabel,
                        const std::string& ylabel) {
  const auto f = detail::FitFrame(series);
  std::string body = detail::Header(title, f, xlabel, ylabel);
  for (const auto& s : series) {
    std::ostringstream o;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      o << "<circle cx=\"" << f.Px(s.x[i]) << "\" cy=\"" << f.Py(s.y[i]) << "\" r=\"2.5\" fill=\""
        << s.color << "\" fill-opacity=\"0.6\"/>\n";
    }
    body += o.str();
  }
  detail::Write(path, body + detail::Legend(series));
}

inline void Histogram(const std::filesystem::path& path, const std::string& title,
                      const std::vector<double>& values, int bins, const std::string& xlabel) {
  double lo = values.empty() ? 0.0 : *std::min_element(values.begin(), values.end());
  double hi = values.empty() ? 1.0 : *std::max_element(values.begin(), values.end());
  if (hi - lo < 1e-12) hi = lo + 1.0;
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  for (double v : values) {
    auto b = static_cast<std::size_t>(std::min<double>(bins - 1, std::floor((v - lo) / (hi - lo) * bins)));
    counts[b] += 1.0;
  }
  const double top = counts.empty() ? 1.0 : std::max(1.0, *std::max_element(counts.begin(), counts.end()));
  detail::Frame f{lo, hi, 0.0, top};
  std::string body = detail::Header(title, f, xlabel, "count");
  std::ostringstream o;
  const double width = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b) {
    const double x0 = f.Px(lo + b * width);
    const double x1 = f.Px(lo + (b + 1) * width);
    o << "<rect x=\"" << x0 << "\" y=\"" << f.Py(counts[b]) << "\" width=\"" << std::max(0.0, x1 - x0 - 1)
      << "\" height=\"" << f.Py(0) - f.Py(counts[b]) << "\" fill=\"steelblue\"/>\n";
  }
  detail::Write(path, body + o.str());
}

}  // namespace card::plot
