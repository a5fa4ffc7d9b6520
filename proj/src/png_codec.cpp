#include "png_codec.hpp"

#include <zlib.h>

#include <cstring>

#include "speckle/error.hpp"

namespace speckle::detail {

namespace {

const unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

uint32_t read_be32(const unsigned char* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void append_be32(std::vector<unsigned char>& out, uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

void append_chunk(std::vector<unsigned char>& out, const char type[4],
                  const unsigned char* data, size_t n) {
  append_be32(out, static_cast<uint32_t>(n));
  size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data, data + n);
  uint32_t crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, out.data() + start, static_cast<uInt>(4 + n));
  append_be32(out, crc);
}

std::vector<unsigned char> zlib_inflate(const std::vector<unsigned char>& in, const std::string& origin) {
  z_stream zs;
  std::memset(&zs, 0, sizeof(zs));
  if (inflateInit(&zs) != Z_OK) fail(ErrorCode::IoError, origin + ": inflateInit failed");
  std::vector<unsigned char> out;
  std::vector<unsigned char> buf(1 << 16);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  int ret = Z_OK;
  while (ret != Z_STREAM_END) {
    zs.next_out = buf.data();
    zs.avail_out = static_cast<uInt>(buf.size());
    ret = inflate(&zs, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&zs);
      fail(ErrorCode::IoError, origin + ": corrupt PNG stream");
    }
    out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
  }
  inflateEnd(&zs);
  return out;
}

std::vector<unsigned char> zlib_deflate(const std::vector<unsigned char>& in) {
  uLongf bound = compressBound(static_cast<uLong>(in.size()));
  std::vector<unsigned char> out(bound);
  if (compress2(out.data(), &bound, in.data(), static_cast<uLong>(in.size()), Z_BEST_SPEED) != Z_OK)
    fail(ErrorCode::IoError, "PNG deflate failed");
  out.resize(bound);
  return out;
}

int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

bool looks_like_png(const unsigned char* bytes, size_t n) {
  return n >= 8 && std::memcmp(bytes, kPngSig, 8) == 0;
}

GrayImage decode_png_gray(const std::vector<unsigned char>& bytes, const std::string& origin) {
  if (!looks_like_png(bytes.data(), bytes.size()))
    fail(ErrorCode::IoError, origin + ": not a PNG file");

  GrayImage img;
  std::vector<unsigned char> idat;
  size_t pos = 8;
  bool seen_ihdr = false;
  int color_type = -1, interlace = -1;
  while (pos + 8 <= bytes.size()) {
    uint32_t len = read_be32(bytes.data() + pos);
    if (pos + 12 + len > bytes.size()) fail(ErrorCode::IoError, origin + ": truncated PNG");
    const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
    const unsigned char* data = bytes.data() + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) fail(ErrorCode::IoError, origin + ": bad IHDR");
      img.width = static_cast<int>(read_be32(data));
      img.height = static_cast<int>(read_be32(data + 4));
      img.bit_depth = data[8];
      color_type = data[9];
      interlace = data[12];
      seen_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (!seen_ihdr || idat.empty()) fail(ErrorCode::IoError, origin + ": incomplete PNG");
  if (color_type != 0)
    fail(ErrorCode::UnsupportedBitDepth, origin + ": only grayscale PNG supported (color type " +
                                             std::to_string(color_type) + ")");
  if (img.bit_depth != 8 && img.bit_depth != 16)
    fail(ErrorCode::UnsupportedBitDepth,
         origin + ": PNG bit depth " + std::to_string(img.bit_depth) + " not supported");
  if (interlace != 0) fail(ErrorCode::UnsupportedBitDepth, origin + ": interlaced PNG not supported");
  if (img.width <= 0 || img.height <= 0) fail(ErrorCode::IoError, origin + ": bad PNG dimensions");

  const int bpp = img.bit_depth / 8;
  const size_t row_bytes = static_cast<size_t>(img.width) * bpp;
  std::vector<unsigned char> raw = zlib_inflate(idat, origin);
  if (raw.size() != (row_bytes + 1) * static_cast<size_t>(img.height))
    fail(ErrorCode::IoError, origin + ": PNG pixel data size mismatch");

  // Undo per-row filters in place.
  std::vector<unsigned char> prev(row_bytes, 0);
  std::vector<unsigned char> cur(row_bytes);
  img.samples.resize(static_cast<size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y) {
    const unsigned char* src = raw.data() + static_cast<size_t>(y) * (row_bytes + 1);
    const int filter = src[0];
    const unsigned char* line = src + 1;
    for (size_t i = 0; i < row_bytes; ++i) {
      const int a = i >= static_cast<size_t>(bpp) ? cur[i - bpp] : 0;
      const int b = prev[i];
      const int c = i >= static_cast<size_t>(bpp) ? prev[i - bpp] : 0;
      int x = line[i];
      switch (filter) {
        case 0: break;
        case 1: x += a; break;
        case 2: x += b; break;
        case 3: x += (a + b) / 2; break;
        case 4: x += paeth(a, b, c); break;
        default: fail(ErrorCode::IoError, origin + ": unknown PNG filter");
      }
      cur[i] = static_cast<unsigned char>(x & 0xff);
    }
    for (int x = 0; x < img.width; ++x) {
      img.samples[static_cast<size_t>(y) * img.width + x] =
          bpp == 1 ? cur[x] : static_cast<uint16_t>((cur[2 * x] << 8) | cur[2 * x + 1]);
    }
    std::swap(prev, cur);
  }
  return img;
}

std::vector<unsigned char> encode_png_gray(const GrayImage& image) {
  if (image.bit_depth != 8 && image.bit_depth != 16)
    fail(ErrorCode::UnsupportedBitDepth, "PNG encode: bit depth must be 8 or 16");
  const int bpp = image.bit_depth / 8;
  const size_t row_bytes = static_cast<size_t>(image.width) * bpp;

  std::vector<unsigned char> raw;
  raw.reserve((row_bytes + 1) * image.height);
  for (int y = 0; y < image.height; ++y) {
    raw.push_back(0);  // filter: none
    for (int x = 0; x < image.width; ++x) {
      uint16_t v = image.samples[static_cast<size_t>(y) * image.width + x];
      if (bpp == 2) raw.push_back(static_cast<unsigned char>(v >> 8));
      raw.push_back(static_cast<unsigned char>(v & 0xff));
    }
  }

  std::vector<unsigned char> out(kPngSig, kPngSig + 8);
  unsigned char ihdr[13];
  ihdr[0] = static_cast<unsigned char>(image.width >> 24);
  ihdr[1] = static_cast<unsigned char>(image.width >> 16);
  ihdr[2] = static_cast<unsigned char>(image.width >> 8);
  ihdr[3] = static_cast<unsigned char>(image.width);
  ihdr[4] = static_cast<unsigned char>(image.height >> 24);
  ihdr[5] = static_cast<unsigned char>(image.height >> 16);
  ihdr[6] = static_cast<unsigned char>(image.height >> 8);
  ihdr[7] = static_cast<unsigned char>(image.height);
  ihdr[8] = static_cast<unsigned char>(image.bit_depth);
  ihdr[9] = 0;   // grayscale
  ihdr[10] = 0;  // deflate
  ihdr[11] = 0;  // default filtering
  ihdr[12] = 0;  // no interlace
  append_chunk(out, "IHDR", ihdr, sizeof(ihdr));
  std::vector<unsigned char> compressed = zlib_deflate(raw);
  append_chunk(out, "IDAT", compressed.data(), compressed.size());
  append_chunk(out, "IEND", nullptr, 0);
  return out;
}

}  // namespace speckle::detail
