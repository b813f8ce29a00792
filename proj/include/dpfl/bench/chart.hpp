// Copyright 2026 The dpfl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Static SVG line charts: mean accuracy per round with a +-1 std band, and
// mean epsilon_hat per round for the private methods.

#ifndef DPFL_BENCH_CHART_HPP_
#define DPFL_BENCH_CHART_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dpfl/bench/metrics.hpp"
#include "dpfl/common/error.hpp"

namespace dpfl::bench {

struct ChartSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> band;  // half-width, empty for no band
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::string caption;
  std::vector<ChartSeries> series;
};

namespace internal {

inline const char* series_color(size_t i) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  return kColors[i % (sizeof kColors / sizeof kColors[0])];
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace internal

inline std::string render_svg(const ChartSpec& spec) {
  using internal::num;
  require(!spec.series.empty(), "chart: no series");
  const double w = 720, h = 440, left = 70, right = 150, top = 40, bottom = 70;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : spec.series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      const double b = s.band.empty() ? 0.0 : s.band[i];
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i] - b);
      y1 = std::max(y1, s.y[i] + b);
    }
  }
  require(x0 <= x1, "chart: series have no points");
  if (x1 == x0) x1 = x0 + 1;
  if (y1 - y0 < 1e-12) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pw = w - left - right, ph = h - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) +
                    "\" height=\"" + num(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(w / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         internal::escape(spec.title) + "</text>\n";
  svg += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) +
         "\" height=\"" + num(ph) + "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double yv = y0 + (y1 - y0) * i / 5.0, xv = x0 + (x1 - x0) * i / 5.0;
    svg += "<line x1=\"" + num(left) + "\" x2=\"" + num(left + pw) + "\" y1=\"" + num(py(yv)) +
           "\" y2=\"" + num(py(yv)) + "\" stroke=\"#ddd\"/>\n";
    svg += "<text x=\"" + num(left - 6) + "\" y=\"" + num(py(yv) + 4) +
           "\" text-anchor=\"end\">" + internal::tick(yv) + "</text>\n";
    svg += "<text x=\"" + num(px(xv)) + "\" y=\"" + num(top + ph + 16) +
           "\" text-anchor=\"middle\">" + internal::tick(xv) + "</text>\n";
  }
  svg += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(top + ph + 34) +
         "\" text-anchor=\"middle\">" + internal::escape(spec.x_label) + "</text>\n";
  svg += "<text transform=\"translate(18," + num(top + ph / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">" + internal::escape(spec.y_label) +
         "</text>\n";

  for (size_t si = 0; si < spec.series.size(); ++si) {
    const auto& s = spec.series[si];
    const char* color = internal::series_color(si);
    if (!s.band.empty() && s.x.size() > 1) {
      std::string pts;
      for (size_t i = 0; i < s.x.size(); ++i) {
        pts += num(px(s.x[i])) + "," + num(py(s.y[i] + s.band[i])) + " ";
      }
      for (size_t i = s.x.size(); i-- > 0;) {
        pts += num(px(s.x[i])) + "," + num(py(s.y[i] - s.band[i])) + " ";
      }
      svg += "<polygon class=\"band\" data-series=\"" + internal::escape(s.label) +
             "\" points=\"" + pts + "\" fill=\"" + color + "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
    }
    std::string pts;
    for (size_t i = 0; i < s.x.size(); ++i) pts += num(px(s.x[i])) + "," + num(py(s.y[i])) + " ";
    svg += "<polyline class=\"series\" data-series=\"" + internal::escape(s.label) +
           "\" points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"1.8\"/>\n";
    const double ly = top + 14 + 18.0 * static_cast<double>(si);
    svg += "<line x1=\"" + num(left + pw + 12) + "\" x2=\"" + num(left + pw + 36) + "\" y1=\"" +
           num(ly) + "\" y2=\"" + num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text class=\"legend\" x=\"" + num(left + pw + 42) + "\" y=\"" + num(ly + 4) + "\">" +
           internal::escape(s.label) + "</text>\n";
  }
  if (!spec.caption.empty()) {
    svg += "<text class=\"caption\" x=\"" + num(left) + "\" y=\"" + num(h - 12) + "\">" +
           internal::escape(spec.caption) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

struct ChartPair {
  std::string accuracy_svg;
  std::string epsilon_svg;  // empty when no private method is present
  std::vector<std::string> accuracy_methods;
  std::vector<std::string> epsilon_methods;
};

// Builds both charts from per-method metrics (as read by read_metrics_dir).
inline ChartPair build_charts(const std::map<std::string, std::vector<MetricsRecord>>& metrics) {
  if (metrics.empty()) throw InvalidArgument("chart: no metrics found");
  ChartSpec acc{"Test accuracy (mean +- std over seeds)", "round", "accuracy", "", {}};
  ChartSpec eps{"Privacy spend", "round", "epsilon_hat", "", {}};
  ChartPair out;
  std::set<double> deltas;
  for (const auto& [method, records] : metrics) {
    ChartSeries a{method, {}, {}, {}}, e{method, {}, {}, {}};
    for (const auto& row : summarize(records)) {
      a.x.push_back(row.round);
      a.y.push_back(row.accuracy_mean);
      a.band.push_back(row.accuracy_std);
      if (row.epsilon_mean) {
        e.x.push_back(row.round);
        e.y.push_back(*row.epsilon_mean);
      }
    }
    for (const auto& r : records) {
      if (r.delta) deltas.insert(*r.delta);
    }
    if (a.x.empty()) continue;
    out.accuracy_methods.push_back(method);
    acc.series.push_back(std::move(a));
    if (!e.x.empty()) {
      out.epsilon_methods.push_back(method);
      eps.series.push_back(std::move(e));
    }
  }
  if (acc.series.empty()) throw InvalidArgument("chart: metrics contain no rows");
  std::string delta_text;
  for (double d : deltas) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", d);
    delta_text += (delta_text.empty() ? "" : ", ") + std::string(buf);
  }
  if (!delta_text.empty()) {
    acc.caption = "private methods use delta = " + delta_text;
    eps.caption = "delta = " + delta_text + " for all private methods";
  }
  out.accuracy_svg = render_svg(acc);
  if (!eps.series.empty()) out.epsilon_svg = render_svg(eps);
  return out;
}

}  // namespace dpfl::bench

#endif  // DPFL_BENCH_CHART_HPP_
