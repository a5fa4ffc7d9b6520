#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>

#include <json.hpp>

namespace speckle {

/// Parameters of the estimation pipeline. Defaults follow the reference setup:
/// 11x11 patches, 5 embedding dimensions, 8-pixel subsampling.
struct PipelineConfig {
  int patch_size = 11;          // odd, >= 3
  int embed_dim = 5;            // l, 1 <= l <= patch_size^2
  int subsample_stride = 8;     // coarse-pass grid stride in pixels
  int neighborhood_radius = 1;  // Chebyshev radius on the analysis grid, in grid units
  double lambda = 1.0;          // spatial-term weight in the joint objective
  double epsilon = 1e-8;        // guard for divisions and norm smoothing
  int max_iters = 100;          // optimizer iteration cap
  double tol = 1e-6;            // relative objective decrease for convergence
  uint64_t seed = 1;
  double bandwidth_mult = 1.0;  // kernel bandwidth = median off-diagonal distance * this
  bool temporal = true;         // false: unordered input, stop after the consistency solve
  int threads = 0;              // 0 = OpenMP default

  void validate() const;  // throws InvalidConfig
};

/// Ordered so config echoes are reproducible.
using KeyValueMap = std::map<std::string, std::string>;

// Simple `key = value` text format, '#' comments, blank lines ignored.
KeyValueMap parse_key_values(std::istream& in, const std::string& origin);
KeyValueMap parse_key_value_file(const std::string& path);

/// Apply map entries over `base`; unknown keys throw InvalidConfig.
PipelineConfig config_from_map(const KeyValueMap& map, PipelineConfig base = {});

nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig config_from_json(const nlohmann::json& j);

bool parse_bool(const std::string& value, const std::string& key);

}  // namespace speckle
