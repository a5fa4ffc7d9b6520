#pragma once

#include <string>
#include <vector>

#include "speckle/types.hpp"

namespace speckle {

struct PlotSeries {
  std::vector<double> x;
  std::vector<double> y;
  float shade = 0.0f;  // 0 = black
};

/// Minimal line-plot rasterizer for report images: white background, framed
/// axes, one polyline per series. Returns a [0,1] grayscale image.
Image render_line_plot(const std::vector<PlotSeries>& series, int width = 640, int height = 400);

/// Convenience: plot and save as 8-bit gray PNG.
void save_line_plot(const std::string& path, const std::vector<PlotSeries>& series,
                    int width = 640, int height = 400);

}  // namespace speckle
