#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "image.hpp"

namespace splitshield {

// Minimal chart renderer: enough to draw training curves, component sweeps
// and grouped comparison bars straight into PNGs without a plotting stack.

struct Series {
  std::string label;
  std::vector<double> x, y;
  float r = 0.1f, g = 0.3f, b = 0.8f;
};

struct ChartOptions {
  int width = 480, height = 320;
  int margin = 32;
  bool log_x = false;
  double y_min = 0.0, y_max = 1.0;
  bool auto_y = false;
};

namespace detail {

inline void put_px(Image& img, int x, int y, float r, float g, float b) {
  if (x < 0 || y < 0 || x >= img.x || y >= img.y) return;
  img.at(0, y, x) = r;
  img.at(1, y, x) = g;
  img.at(2, y, x) = b;
}

inline void draw_line(Image& img, int x0, int y0, int x1, int y1, float r,
                      float g, float b) {
  int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put_px(img, x0, y0, r, g, b);
    if (x0 == x1 && y0 == y1) break;
    int e2 = 2 * err;
    if (e2 >= dy) { err += dy; x0 += sx; }
    if (e2 <= dx) { err += dx; y0 += sy; }
  }
}

}  // namespace detail

inline void render_line_chart(const std::filesystem::path& path,
                              const std::vector<Series>& series,
                              ChartOptions opt = {}) {
  if (series.empty()) throw std::invalid_argument("render_line_chart: no data");
  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  double y_min = opt.y_min, y_max = opt.y_max;
  if (opt.auto_y) {
    y_min = std::numeric_limits<double>::infinity();
    y_max = -y_min;
  }
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || s.x.empty())
      throw std::invalid_argument("render_line_chart: malformed series");
    for (double v : s.x) {
      if (opt.log_x && v <= 0)
        throw std::invalid_argument("render_line_chart: log axis needs x > 0");
      x_min = std::min(x_min, v);
      x_max = std::max(x_max, v);
    }
    if (opt.auto_y)
      for (double v : s.y) {
        y_min = std::min(y_min, v);
        y_max = std::max(y_max, v);
      }
  }
  if (x_max == x_min) x_max = x_min + 1;
  if (y_max == y_min) y_max = y_min + 1;
  auto tx = [&](double v) {
    double a = opt.log_x ? std::log(v) : v;
    double lo = opt.log_x ? std::log(x_min) : x_min;
    double hi = opt.log_x ? std::log(x_max) : x_max;
    if (hi == lo) hi = lo + 1;
    return opt.margin +
           (a - lo) / (hi - lo) * (opt.width - 2 * opt.margin);
  };
  auto ty = [&](double v) {
    return opt.height - opt.margin -
           (v - y_min) / (y_max - y_min) * (opt.height - 2 * opt.margin);
  };
  Image img(3, opt.height, opt.width, 1.0f);
  // axes
  detail::draw_line(img, opt.margin, opt.margin, opt.margin,
                    opt.height - opt.margin, 0.2f, 0.2f, 0.2f);
  detail::draw_line(img, opt.margin, opt.height - opt.margin,
                    opt.width - opt.margin, opt.height - opt.margin, 0.2f,
                    0.2f, 0.2f);
  for (const auto& s : series)
    for (size_t i = 1; i < s.x.size(); ++i)
      detail::draw_line(img, int(tx(s.x[i - 1])), int(ty(s.y[i - 1])),
                        int(tx(s.x[i])), int(ty(s.y[i])), s.r, s.g, s.b);
  write_png(path, img);
}

struct BarGroup {
  std::string label;
  std::vector<double> values;  // one bar per value
};

// Grouped bars in [0,1]; bar colors cycle through a fixed palette.
inline void render_bar_chart(const std::filesystem::path& path,
                             const std::vector<BarGroup>& groups,
                             ChartOptions opt = {}) {
  if (groups.empty()) throw std::invalid_argument("render_bar_chart: no data");
  static const float palette[4][3] = {{0.15f, 0.35f, 0.75f},
                                      {0.85f, 0.25f, 0.2f},
                                      {0.2f, 0.65f, 0.3f},
                                      {0.8f, 0.6f, 0.1f}};
  Image img(3, opt.height, opt.width, 1.0f);
  detail::draw_line(img, opt.margin, opt.margin, opt.margin,
                    opt.height - opt.margin, 0.2f, 0.2f, 0.2f);
  detail::draw_line(img, opt.margin, opt.height - opt.margin,
                    opt.width - opt.margin, opt.height - opt.margin, 0.2f,
                    0.2f, 0.2f);
  const int plot_w = opt.width - 2 * opt.margin;
  const int plot_h = opt.height - 2 * opt.margin;
  const int group_w = plot_w / static_cast<int>(groups.size());
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    if (g.values.empty()) continue;
    int bar_w = std::max(2, group_w / (static_cast<int>(g.values.size()) + 1));
    for (size_t vi = 0; vi < g.values.size(); ++vi) {
      double v = std::clamp(g.values[vi], 0.0, 1.0);
      int x0 = opt.margin + static_cast<int>(gi) * group_w +
               static_cast<int>(vi) * bar_w + bar_w / 2;
      int top = opt.height - opt.margin - static_cast<int>(v * plot_h);
      const float* col = palette[vi % 4];
      for (int x = x0; x < x0 + bar_w - 1; ++x)
        detail::draw_line(img, x, top, x, opt.height - opt.margin - 1, col[0],
                          col[1], col[2]);
    }
  }
  write_png(path, img);
}

// Images side by side with a small gap, e.g. original / protected /
// reconstructed.
inline void render_strip(const std::filesystem::path& path,
                         const std::vector<Image>& images, int gap = 4) {
  if (images.empty()) throw std::invalid_argument("render_strip: no images");
  int h = 0, w = 0;
  for (const auto& im : images) {
    h = std::max(h, im.y);
    w += im.x + gap;
  }
  w -= gap;
  Image out(3, h, w, 1.0f);
  int off = 0;
  for (const auto& im : images) {
    for (int ch = 0; ch < 3; ++ch)
      for (int r = 0; r < im.y; ++r)
        for (int c = 0; c < im.x; ++c)
          out.at(ch, r, off + c) = im.z == 1 ? im.at(0, r, c) : im.at(ch, r, c);
    off += im.x + gap;
  }
  write_png(path, out);
}

}  // namespace splitshield
