#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "thermalize/errors.hpp"

namespace thermalize {

/// Minimal deterministic SVG line/scatter plot. Text output only, fixed
/// layout, no timestamps, so identical data renders identical bytes.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string x_label, std::string y_label, bool log_y = false)
      : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)),
        log_y_(log_y) {}

  void add_line(std::vector<double> xs, std::vector<double> ys, std::string color) {
    add_series(std::move(xs), std::move(ys), std::move(color), false);
  }

  void add_points(std::vector<double> xs, std::vector<double> ys, std::string color) {
    add_series(std::move(xs), std::move(ys), std::move(color), true);
  }

  std::string render() const {
    double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
    bool first = true;
    for (const Series& s : series_) {
      for (std::size_t i = 0; i < s.xs.size(); ++i) {
        const double y = log_y_ ? safe_log10(s.ys[i]) : s.ys[i];
        if (!std::isfinite(s.xs[i]) || !std::isfinite(y)) continue;
        if (first) {
          x_lo = x_hi = s.xs[i];
          y_lo = y_hi = y;
          first = false;
        } else {
          x_lo = std::min(x_lo, s.xs[i]);
          x_hi = std::max(x_hi, s.xs[i]);
          y_lo = std::min(y_lo, y);
          y_hi = std::max(y_hi, y);
        }
      }
    }
    if (x_hi <= x_lo) x_hi = x_lo + 1.0;
    if (y_hi <= y_lo) y_hi = y_lo + 1.0;

    const double w = 720.0, h = 480.0;
    const double ml = 72.0, mr = 24.0, mt = 40.0, mb = 56.0;
    auto px = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * (w - ml - mr); };
    auto py = [&](double yv) {
      const double y = log_y_ ? safe_log10(yv) : yv;
      return h - mb - (y - y_lo) / (y_hi - y_lo) * (h - mt - mb);
    };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"480\" "
           "viewBox=\"0 0 720 480\">\n";
    out += "<rect width=\"720\" height=\"480\" fill=\"white\"/>\n";
    out += "<text x=\"360\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"16\">" + escape(title_) + "</text>\n";

    // Axes box.
    out += "<rect x=\"" + num(ml) + "\" y=\"" + num(mt) + "\" width=\"" + num(w - ml - mr) +
           "\" height=\"" + num(h - mt - mb) + "\" fill=\"none\" stroke=\"black\"/>\n";

    // Ticks.
    for (int k = 0; k <= 5; ++k) {
      const double fx = x_lo + (x_hi - x_lo) * k / 5.0;
      const double fy = y_lo + (y_hi - y_lo) * k / 5.0;
      out += "<line x1=\"" + num(px(fx)) + "\" y1=\"" + num(h - mb) + "\" x2=\"" + num(px(fx)) +
             "\" y2=\"" + num(h - mb + 5.0) + "\" stroke=\"black\"/>\n";
      out += "<text x=\"" + num(px(fx)) + "\" y=\"" + num(h - mb + 20.0) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
             tick_label(fx) + "</text>\n";
      const double yy = h - mb - (fy - y_lo) / (y_hi - y_lo) * (h - mt - mb);
      out += "<line x1=\"" + num(ml - 5.0) + "\" y1=\"" + num(yy) + "\" x2=\"" + num(ml) +
             "\" y2=\"" + num(yy) + "\" stroke=\"black\"/>\n";
      const double label_val = log_y_ ? std::pow(10.0, fy) : fy;
      out += "<text x=\"" + num(ml - 8.0) + "\" y=\"" + num(yy + 4.0) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
             tick_label(label_val) + "</text>\n";
    }
    out += "<text x=\"" + num(ml + (w - ml - mr) / 2.0) + "\" y=\"" + num(h - 12.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" +
           escape(x_label_) + "</text>\n";
    out += "<text x=\"16\" y=\"" + num(mt + (h - mt - mb) / 2.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
           "transform=\"rotate(-90 16 " + num(mt + (h - mt - mb) / 2.0) + ")\">" +
           escape(y_label_) + "</text>\n";

    for (const Series& s : series_) {
      if (s.scatter) {
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
          const double y = log_y_ ? safe_log10(s.ys[i]) : s.ys[i];
          if (!std::isfinite(s.xs[i]) || !std::isfinite(y)) continue;
          out += "<circle cx=\"" + num(px(s.xs[i])) + "\" cy=\"" + num(py(s.ys[i])) +
                 "\" r=\"3\" fill=\"" + s.color + "\"/>\n";
        }
      } else {
        std::string pts;
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
          const double y = log_y_ ? safe_log10(s.ys[i]) : s.ys[i];
          if (!std::isfinite(s.xs[i]) || !std::isfinite(y)) continue;
          pts += num(px(s.xs[i])) + "," + num(py(s.ys[i])) + " ";
        }
        if (!pts.empty()) pts.pop_back();
        out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + s.color +
               "\" stroke-width=\"1.5\"/>\n";
      }
    }
    out += "</svg>\n";
    return out;
  }

 private:
  struct Series {
    std::vector<double> xs, ys;
    std::string color;
    bool scatter = false;
  };

  void add_series(std::vector<double> xs, std::vector<double> ys, std::string color,
                  bool scatter) {
    if (xs.size() != ys.size()) throw parameter_error("series x/y lengths differ");
    series_.push_back({std::move(xs), std::move(ys), std::move(color), scatter});
  }

  static double safe_log10(double v) {
    return v > 0.0 ? std::log10(v) : std::numeric_limits<double>::quiet_NaN();
  }

  static std::string num(double v) {
    // Fixed 2-decimal pixel coordinates keep the output compact and stable.
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
  }

  static std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
  }

  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '&') out += "&amp;";
      else if (c == '<') out += "&lt;";
      else if (c == '>') out += "&gt;";
      else out += c;
    }
    return out;
  }

  std::string title_, x_label_, y_label_;
  bool log_y_ = false;
  std::vector<Series> series_;
};

}  // namespace thermalize
