#pragma once

// Raster plots written as PNG: heatmaps and 1D profile line plots. No text
// rendering; captions live in the accompanying CSV/markdown tables.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <span>
#include <vector>

#include "spacenet/image_io.hpp"
#include "spacenet/metrics.hpp"

namespace spacenet::plot {

/// Piecewise-linear approximation of the viridis colour map; t in [0, 1].
inline Rgb viridis(double t) {
  static constexpr std::array<std::array<double, 3>, 6> stops{{{68, 1, 84},
                                                               {65, 68, 135},
                                                               {42, 120, 142},
                                                               {34, 168, 132},
                                                               {122, 209, 81},
                                                               {253, 231, 37}}};
  if (!std::isfinite(t)) t = 0.0;
  t = std::clamp(t, 0.0, 1.0) * (stops.size() - 1);
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(t), stops.size() - 2);
  const double f = t - static_cast<double>(i);
  auto mix = [&](int k) { return static_cast<std::uint8_t>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k]))); };
  return {mix(0), mix(1), mix(2)};
}

/// Min-max scaled heatmap, each cell drawn as a scale×scale block.
inline RgbImage heatmap(const Grid<double>& values, int scale = 1) {
  if (values.empty()) throw ShapeError("cannot plot an empty grid");
  scale = std::max(scale, 1);
  double lo = INFINITY, hi = -INFINITY;
  for (double v : values)
    if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
  const double span = hi > lo ? hi - lo : 1.0;
  RgbImage img(Size{values.height() * scale, values.width() * scale});
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) img(r, c) = viridis((values(r / scale, c / scale) - lo) / span);
  return img;
}

inline void write_heatmap_png(const std::filesystem::path& path, const Grid<double>& values, int scale = 1) {
  write_rgb_png(path, heatmap(values, scale));
}

class Canvas {
 public:
  Canvas(int width, int height, Rgb background = {255, 255, 255})
      : img_(Size{height, width}, background) {}

  const RgbImage& image() const { return img_; }

  void pixel(int x, int y, Rgb c) {
    if (x >= 0 && y >= 0 && x < img_.width() && y < img_.height()) img_(y, x) = c;
  }

  void line(double x0, double y0, double x1, double y1, Rgb c) {
    const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      pixel(static_cast<int>(std::lround(x0 + t * (x1 - x0))), static_cast<int>(std::lround(y0 + t * (y1 - y0))), c);
    }
  }

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::max(0, y0); y < std::min(img_.height(), y1); ++y)
      for (int x = std::max(0, x0); x < std::min(img_.width(), x1); ++x) img_(y, x) = c;
  }

  void marker(double x, double y, int radius, Rgb c) {
    const int cx = static_cast<int>(std::lround(x)), cy = static_cast<int>(std::lround(y));
    fill_rect(cx - radius, cy - radius, cx + radius + 1, cy + radius + 1, c);
  }

  void save(const std::filesystem::path& path) const { write_rgb_png(path, img_); }

 private:
  RgbImage img_;
};

/// Line plot of a profile with its waviness analysis overlaid: effective
/// intervals shaded, extrema marked (boundary anchors in grey).
inline Canvas profile_plot(const Profile1D& profile, const WavinessReport& report, int width = 640,
                           int height = 240) {
  Canvas cv(width, height);
  const auto& v = profile.values;
  if (v.size() < 2) return cv;
  const int pad = 12;
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it, span = *hi_it > *lo_it ? *hi_it - *lo_it : 1.0;
  auto X = [&](double i) { return pad + i * (width - 2 * pad) / static_cast<double>(v.size() - 1); };
  auto Y = [&](double val) { return height - pad - (val - lo) * (height - 2 * pad) / span; };

  for (const auto& iv : report.effective_intervals)
    cv.fill_rect(static_cast<int>(X(iv.start)), pad, static_cast<int>(X(iv.end)) + 1, height - pad,
                 {214, 234, 248});
  cv.line(pad, height - pad, width - pad, height - pad, {160, 160, 160});
  for (std::size_t i = 1; i < v.size(); ++i)
    cv.line(X(static_cast<double>(i - 1)), Y(v[i - 1]), X(static_cast<double>(i)), Y(v[i]), {31, 119, 180});
  for (const auto& e : report.extrema)
    cv.marker(X(e.index), Y(e.value), 3, e.boundary ? Rgb{150, 150, 150} : Rgb{214, 39, 40});
  return cv;
}

}  // namespace spacenet::plot
