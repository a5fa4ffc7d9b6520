#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "speckle/error.hpp"

namespace speckle {

/// Single-channel float image, row-major, values normally in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), data(static_cast<size_t>(w) * static_cast<size_t>(h), fill) {}

  float& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  size_t pixel_count() const { return data.size(); }
  bool same_size(const Image& other) const { return width == other.width && height == other.height; }
};

/// N frames of identical size plus acquisition metadata.
struct FrameSequence {
  std::vector<Image> frames;
  double frame_rate = 0.0;  // Hz
  int bit_depth = 16;       // source depth the intensities were normalized from

  int width() const { return frames.empty() ? 0 : frames.front().width; }
  int height() const { return frames.empty() ? 0 : frames.front().height; }
  int frame_count() const { return static_cast<int>(frames.size()); }
};

struct Rect {
  int x0 = 0, y0 = 0;
  int width = 0, height = 0;

  bool contains(int x, int y) const {
    return x >= x0 && y >= y0 && x < x0 + width && y < y0 + height;
  }
  bool empty() const { return width <= 0 || height <= 0; }
};

/// Regular grid of analysis pixels inside an image: positions x0 + i*stride, y0 + j*stride.
struct PixelGrid {
  int x0 = 0, y0 = 0;
  int stride = 1;
  int cols = 0, rows = 0;

  int x_at(int i) const { return x0 + i * stride; }
  int y_at(int j) const { return y0 + j * stride; }
  int index(int i, int j) const { return j * cols + i; }
  int size() const { return cols * rows; }
  bool same_layout(const PixelGrid& o) const {
    return x0 == o.x0 && y0 == o.y0 && stride == o.stride && cols == o.cols && rows == o.rows;
  }
};

/// Largest rectangle whose pixels have a full patch inside the image.
inline Rect valid_domain(int width, int height, int patch_size) {
  const int r = patch_size / 2;
  Rect rect{r, r, width - 2 * r, height - 2 * r};
  if (rect.empty())
    fail(ErrorCode::DimensionMismatch, "image smaller than patch: " + std::to_string(width) + "x" +
                                           std::to_string(height) + " with patch " +
                                           std::to_string(patch_size));
  return rect;
}

inline PixelGrid make_grid(const Rect& domain, int stride) {
  if (stride < 1) fail(ErrorCode::InvalidConfig, "stride must be >= 1");
  PixelGrid g;
  g.x0 = domain.x0;
  g.y0 = domain.y0;
  g.stride = stride;
  g.cols = (domain.width - 1) / stride + 1;
  g.rows = (domain.height - 1) / stride + 1;
  return g;
}

}  // namespace speckle
