#include "speckle/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "speckle/imageio.hpp"

namespace speckle {

namespace {

void draw_line(Image& img, double x0, double y0, double x1, double y1, float shade) {
  const double dx = x1 - x0, dy = y1 - y0;
  const int steps = std::max(2, static_cast<int>(std::ceil(std::max(std::abs(dx), std::abs(dy)) * 2)));
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const int px = static_cast<int>(std::lround(x0 + t * dx));
    const int py = static_cast<int>(std::lround(y0 + t * dy));
    if (px >= 0 && px < img.width && py >= 0 && py < img.height) img.at(px, py) = shade;
  }
}

}  // namespace

Image render_line_plot(const std::vector<PlotSeries>& series, int width, int height) {
  Image img(width, height, 1.0f);
  const int m = 24;  // margin

  double x_lo = std::numeric_limits<double>::max(), x_hi = std::numeric_limits<double>::lowest();
  double y_lo = x_lo, y_hi = x_hi;
  bool any = false;
  for (const auto& s : series) {
    for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, s.y[i]);
      y_hi = std::max(y_hi, s.y[i]);
      any = true;
    }
  }
  if (!any) return img;
  if (!(x_hi > x_lo)) x_hi = x_lo + 1.0;
  if (!(y_hi > y_lo)) y_hi = y_lo + 1.0;

  // frame
  draw_line(img, m, m, width - m, m, 0.6f);
  draw_line(img, m, height - m, width - m, height - m, 0.6f);
  draw_line(img, m, m, m, height - m, 0.6f);
  draw_line(img, width - m, m, width - m, height - m, 0.6f);

  auto to_px = [&](double x) { return m + (x - x_lo) / (x_hi - x_lo) * (width - 2 * m); };
  auto to_py = [&](double y) { return height - m - (y - y_lo) / (y_hi - y_lo) * (height - 2 * m); };

  // zero line when the range straddles zero
  if (y_lo < 0.0 && y_hi > 0.0)
    draw_line(img, m, to_py(0.0), width - m, to_py(0.0), 0.85f);

  for (const auto& s : series) {
    const size_t n = std::min(s.x.size(), s.y.size());
    for (size_t i = 0; i + 1 < n; ++i)
      draw_line(img, to_px(s.x[i]), to_py(s.y[i]), to_px(s.x[i + 1]), to_py(s.y[i + 1]), s.shade);
  }
  return img;
}

void save_line_plot(const std::string& path, const std::vector<PlotSeries>& series, int width,
                    int height) {
  save_image(path, render_line_plot(series, width, height), 8);
}

}  // namespace speckle
