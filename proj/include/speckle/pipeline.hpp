#pragma once

#include <string>
#include <vector>

#include "speckle/config.hpp"
#include "speckle/refine.hpp"
#include "speckle/types.hpp"

namespace speckle {

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct AnalyzeResult {
  DisplacementMaps maps;
  PipelineConfig config;
  std::vector<StageTiming> timings;
  OptimizeStats optimize_stats;  // meaningful only when config.temporal
  int degenerate_pixels = 0;
  int rank_deficient_pixels = 0;
};

/// Full estimation pipeline: per-pixel embedding on the subsampled grid, the
/// global consistency solve, scale initialization, lift to full resolution,
/// joint optimization, displacement extraction. With temporal = false (frame
/// order carries no information) the run stops after the consistency solve and
/// returns coarse-grid maps.
AnalyzeResult analyze(const FrameSequence& seq, const PipelineConfig& cfg);

}  // namespace speckle
