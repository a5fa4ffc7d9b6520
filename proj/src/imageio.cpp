#include "speckle/imageio.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "png_codec.hpp"

namespace fs = std::filesystem;

namespace speckle {

namespace {

static_assert(std::endian::native == std::endian::little,
              "raw float output assumes a little-endian host");

struct PgmHeader {
  int width = 0, height = 0, maxval = 0;
  size_t data_offset = 0;
};

// P5 header: token-based, '#' comments allowed between tokens.
PgmHeader parse_pgm_header(const std::vector<unsigned char>& bytes, const std::string& origin) {
  size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') ++pos;
    if (start == pos) fail(ErrorCode::IoError, origin + ": truncated PGM header");
    return std::string(bytes.begin() + start, bytes.begin() + pos);
  };

  if (next_token() != "P5") fail(ErrorCode::IoError, origin + ": not a binary PGM (P5) file");
  PgmHeader h;
  h.width = std::stoi(next_token());
  h.height = std::stoi(next_token());
  h.maxval = std::stoi(next_token());
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    fail(ErrorCode::IoError, origin + ": malformed PGM header");
  h.data_offset = pos + 1;  // single whitespace after maxval
  if (h.width <= 0 || h.height <= 0) fail(ErrorCode::IoError, origin + ": bad PGM dimensions");
  return h;
}

Image from_samples(const uint16_t* samples, int width, int height, int maxval) {
  Image img(width, height);
  const float scale = 1.0f / static_cast<float>(maxval);
  for (size_t i = 0; i < img.pixel_count(); ++i)
    img.data[i] = static_cast<float>(samples[i]) * scale;
  return img;
}

uint16_t quantize(float v, int maxval) {
  float scaled = std::clamp(v, 0.0f, 1.0f) * static_cast<float>(maxval) + 0.5f;
  return static_cast<uint16_t>(std::min(scaled, static_cast<float>(maxval)));
}

}  // namespace

std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::string& path, const void* data, size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot create file: " + path);
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) fail(ErrorCode::IoError, "write failed: " + path);
}

Image load_image(const std::string& path, int* bit_depth) {
  std::vector<unsigned char> bytes = read_file_bytes(path);
  if (detail::looks_like_png(bytes.data(), bytes.size())) {
    detail::GrayImage g = detail::decode_png_gray(bytes, path);
    if (bit_depth) *bit_depth = g.bit_depth;
    return from_samples(g.samples.data(), g.width, g.height, (1 << g.bit_depth) - 1);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') {
    PgmHeader h = parse_pgm_header(bytes, path);
    if (h.maxval != 255 && h.maxval != 65535)
      fail(ErrorCode::UnsupportedBitDepth,
           path + ": PGM maxval " + std::to_string(h.maxval) + " (expected 255 or 65535)");
    const int bpp = h.maxval > 255 ? 2 : 1;
    const size_t n = static_cast<size_t>(h.width) * h.height;
    if (bytes.size() < h.data_offset + n * bpp)
      fail(ErrorCode::IoError, path + ": truncated PGM pixel data");
    std::vector<uint16_t> samples(n);
    const unsigned char* p = bytes.data() + h.data_offset;
    if (bpp == 1) {
      for (size_t i = 0; i < n; ++i) samples[i] = p[i];
    } else {
      for (size_t i = 0; i < n; ++i) samples[i] = static_cast<uint16_t>((p[2 * i] << 8) | p[2 * i + 1]);
    }
    if (bit_depth) *bit_depth = bpp * 8;
    return from_samples(samples.data(), h.width, h.height, h.maxval);
  }
  fail(ErrorCode::IoError, path + ": unrecognized image format (expected PGM or PNG)");
}

void save_image(const std::string& path, const Image& image, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16)
    fail(ErrorCode::UnsupportedBitDepth, "save_image: bit depth must be 8 or 16");
  const int maxval = (1 << bit_depth) - 1;
  const bool png = path.size() >= 4 && path.substr(path.size() - 4) == ".png";
  if (png) {
    detail::GrayImage g;
    g.width = image.width;
    g.height = image.height;
    g.bit_depth = bit_depth;
    g.samples.resize(image.pixel_count());
    for (size_t i = 0; i < image.pixel_count(); ++i) g.samples[i] = quantize(image.data[i], maxval);
    auto bytes = detail::encode_png_gray(g);
    write_file_bytes(path, bytes.data(), bytes.size());
    return;
  }
  std::ostringstream header;
  header << "P5\n" << image.width << " " << image.height << "\n" << maxval << "\n";
  std::string head = header.str();
  std::vector<unsigned char> out(head.begin(), head.end());
  for (size_t i = 0; i < image.pixel_count(); ++i) {
    uint16_t v = quantize(image.data[i], maxval);
    if (bit_depth == 16) out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v & 0xff));
  }
  write_file_bytes(path, out.data(), out.size());
}

std::string pattern_path(const std::string& path_pattern, int index) {
  size_t pos = path_pattern.find("{index}");
  if (pos == std::string::npos)
    fail(ErrorCode::InvalidConfig, "path pattern must contain {index}: " + path_pattern);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", index);
  return path_pattern.substr(0, pos) + buf + path_pattern.substr(pos + 7);
}

FrameSequence load_sequence(const std::string& path_pattern, double frame_rate) {
  size_t pos = path_pattern.find("{index}");
  if (pos == std::string::npos)
    fail(ErrorCode::InvalidConfig, "path pattern must contain {index}: " + path_pattern);

  fs::path full(path_pattern);
  fs::path dir = full.parent_path().empty() ? fs::path(".") : full.parent_path();
  std::string name = full.filename().string();
  size_t name_pos = name.find("{index}");
  if (name_pos == std::string::npos)
    fail(ErrorCode::InvalidConfig, "{index} must be in the filename part: " + path_pattern);
  const std::string prefix = name.substr(0, name_pos);
  const std::string suffix = name.substr(name_pos + 7);

  std::vector<std::pair<long, std::string>> found;
  if (!fs::is_directory(dir)) fail(ErrorCode::IoError, "no such directory: " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string fname = entry.path().filename().string();
    if (fname.size() <= prefix.size() + suffix.size()) continue;
    if (fname.compare(0, prefix.size(), prefix) != 0) continue;
    if (fname.compare(fname.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
    const std::string digits = fname.substr(prefix.size(), fname.size() - prefix.size() - suffix.size());
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) continue;
    found.emplace_back(std::stol(digits), entry.path().string());
  }
  if (found.size() < 2)
    fail(ErrorCode::MissingFrame, "pattern matched " + std::to_string(found.size()) +
                                      " files, need at least 2: " + path_pattern);
  std::sort(found.begin(), found.end());
  for (size_t i = 1; i < found.size(); ++i) {
    if (found[i].first == found[i - 1].first)
      fail(ErrorCode::MissingFrame, "duplicate frame index " + std::to_string(found[i].first));
    if (found[i].first != found[i - 1].first + 1)
      fail(ErrorCode::MissingFrame, "gap in frame indices between " +
                                        std::to_string(found[i - 1].first) + " and " +
                                        std::to_string(found[i].first));
  }

  FrameSequence seq;
  seq.frame_rate = frame_rate;
  seq.frames.reserve(found.size());
  int depth0 = 0;
  for (size_t i = 0; i < found.size(); ++i) {
    int depth = 0;
    Image img = load_image(found[i].second, &depth);
    if (i == 0) {
      depth0 = depth;
    } else {
      if (!img.same_size(seq.frames.front()))
        fail(ErrorCode::DimensionMismatch,
             found[i].second + ": frame size differs from first frame");
      if (depth != depth0)
        fail(ErrorCode::UnsupportedBitDepth, found[i].second + ": mixed bit depths in sequence");
    }
    seq.frames.push_back(std::move(img));
  }
  seq.bit_depth = depth0;
  return seq;
}

Image read_raw_f32(const std::string& path, int width, int height) {
  std::vector<unsigned char> bytes = read_file_bytes(path);
  const size_t expect = static_cast<size_t>(width) * height * sizeof(float);
  if (bytes.size() != expect)
    fail(ErrorCode::IoError, path + ": raw float size mismatch (got " +
                                 std::to_string(bytes.size()) + ", want " + std::to_string(expect) + ")");
  Image img(width, height);
  std::memcpy(img.data.data(), bytes.data(), expect);
  return img;
}

void write_raw_f32(const std::string& path, const Image& image) {
  write_file_bytes(path, image.data.data(), image.data.size() * sizeof(float));
}

void write_displacement(const std::vector<Image>& maps, const std::string& out_dir,
                        double frame_rate, const nlohmann::json& config_echo, bool previews) {
  if (maps.empty()) fail(ErrorCode::InvalidConfig, "write_displacement: no maps");
  for (const auto& m : maps) {
    if (!m.same_size(maps.front()))
      fail(ErrorCode::DimensionMismatch, "write_displacement: maps differ in size");
    for (float v : m.data)
      if (!std::isfinite(v)) fail(ErrorCode::InvalidConfig, "write_displacement: non-finite value");
  }
  fs::create_directories(out_dir);

  DisplacementMeta meta;
  meta.frame_count = static_cast<int>(maps.size());
  meta.width = maps.front().width;
  meta.height = maps.front().height;
  meta.frame_rate = frame_rate;

  nlohmann::json files = nlohmann::json::array();
  for (size_t i = 0; i < maps.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "d_%04zu.f32", i);
    write_raw_f32((fs::path(out_dir) / buf).string(), maps[i]);
    files.push_back(buf);
  }

  nlohmann::json sidecar{
      {"frame_count", meta.frame_count}, {"width", meta.width},       {"height", meta.height},
      {"frame_rate", meta.frame_rate},   {"config", config_echo},     {"files", files},
      {"format", "raw float32 little-endian row-major"},
  };
  std::ofstream out(fs::path(out_dir) / "maps.json");
  if (!out) fail(ErrorCode::IoError, "cannot create sidecar in " + out_dir);
  out << sidecar.dump(2) << "\n";

  if (previews) {
    float lo = std::numeric_limits<float>::max(), hi = std::numeric_limits<float>::lowest();
    for (const auto& m : maps)
      for (float v : m.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    const float span = hi > lo ? hi - lo : 1.0f;
    for (size_t i = 0; i < maps.size(); ++i) {
      Image scaled(maps[i].width, maps[i].height);
      for (size_t p = 0; p < scaled.pixel_count(); ++p)
        scaled.data[p] = (maps[i].data[p] - lo) / span;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "preview_%04zu.png", i);
      save_image((fs::path(out_dir) / buf).string(), scaled, 16);
    }
  }
}

std::vector<Image> read_displacement(const std::string& dir, DisplacementMeta* meta_out) {
  std::ifstream in(fs::path(dir) / "maps.json");
  if (!in) fail(ErrorCode::IoError, "no maps.json sidecar in " + dir);
  nlohmann::json sidecar;
  try {
    in >> sidecar;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoError, dir + "/maps.json: " + e.what());
  }
  DisplacementMeta meta;
  meta.frame_count = sidecar.at("frame_count").get<int>();
  meta.width = sidecar.at("width").get<int>();
  meta.height = sidecar.at("height").get<int>();
  meta.frame_rate = sidecar.at("frame_rate").get<double>();
  meta.config = sidecar.value("config", nlohmann::json::object());
  for (const auto& f : sidecar.at("files")) meta.files.push_back(f.get<std::string>());
  if (static_cast<int>(meta.files.size()) != meta.frame_count)
    fail(ErrorCode::IoError, dir + ": sidecar frame_count disagrees with file list");

  std::vector<Image> maps;
  maps.reserve(meta.files.size());
  for (const auto& f : meta.files)
    maps.push_back(read_raw_f32((fs::path(dir) / f).string(), meta.width, meta.height));
  if (meta_out) *meta_out = std::move(meta);
  return maps;
}

uint32_t file_crc32(const std::string& path) {
  std::vector<unsigned char> bytes = read_file_bytes(path);
  uint32_t crc = crc32(0L, Z_NULL, 0);
  return crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
}

}  // namespace speckle
