#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "speckle/types.hpp"

namespace speckle {

/// Load one grayscale image (PGM P5 or PNG, 8/16-bit), normalized by (2^depth - 1).
Image load_image(const std::string& path, int* bit_depth = nullptr);

/// Quantize [0,1] floats to the given depth and write PGM (P5) or PNG by extension.
void save_image(const std::string& path, const Image& image, int bit_depth);

/// Expand a `{index}` pattern (zero-padded decimal indices) into an ordered frame
/// sequence. Indices must be contiguous; gaps raise MissingFrame.
FrameSequence load_sequence(const std::string& path_pattern, double frame_rate);

/// Substitute {index} with a zero-padded value (width 4).
std::string pattern_path(const std::string& path_pattern, int index);

struct DisplacementMeta {
  int frame_count = 0;
  int width = 0;
  int height = 0;
  double frame_rate = 0.0;
  nlohmann::json config;  // config echo, free-form
  std::vector<std::string> files;
};

/// Write per-frame raw little-endian float32 row-major files plus a JSON sidecar
/// (maps.json); optionally 16-bit gray previews min-max scaled over the sequence.
void write_displacement(const std::vector<Image>& maps, const std::string& out_dir,
                        double frame_rate, const nlohmann::json& config_echo,
                        bool previews = false);

/// Read back a directory written by write_displacement.
std::vector<Image> read_displacement(const std::string& dir, DisplacementMeta* meta = nullptr);

Image read_raw_f32(const std::string& path, int width, int height);
void write_raw_f32(const std::string& path, const Image& image);

std::vector<unsigned char> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const void* data, size_t size);

/// CRC32 (zlib polynomial) of a file's contents; used for manifest checksums.
uint32_t file_crc32(const std::string& path);

}  // namespace speckle
