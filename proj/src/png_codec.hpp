#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace speckle::detail {

/// Grayscale PNG support (8/16-bit, non-interlaced), enough for frame input
/// and preview/plot output without pulling in an image library.
struct GrayImage {
  int width = 0;
  int height = 0;
  int bit_depth = 8;                // 8 or 16
  std::vector<uint16_t> samples;    // row-major, one sample per pixel
};

bool looks_like_png(const unsigned char* bytes, size_t n);

GrayImage decode_png_gray(const std::vector<unsigned char>& bytes, const std::string& origin);
std::vector<unsigned char> encode_png_gray(const GrayImage& image);

}  // namespace speckle::detail
