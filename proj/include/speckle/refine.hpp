#pragma once

#include <Eigen/Dense>
#include <vector>

#include "speckle/config.hpp"
#include "speckle/consistency.hpp"
#include "speckle/features.hpp"
#include "speckle/types.hpp"

namespace speckle {

/// Per-frame scalar displacement fields sampled on a pixel grid, plus a
/// validity mask (0 where the pixel was flagged all the way through).
struct DisplacementMaps {
  PixelGrid grid;
  std::vector<Image> maps;  // grid.cols x grid.rows each
  Image mask;
};

/// Per-pixel magnitude factors m_F / (m_psi + eps) from mean squared
/// consecutive-frame norms (1/N convention).
std::vector<double> init_scale_factors(const PlaneParams& pp, const FeatureNorms& fn, double epsilon);

/// Rescale plane parameters so their consecutive-frame magnitude matches the
/// feature magnitude per pixel.
PlaneParams init_scale(const PlaneParams& pp, const FeatureNorms& fn, double epsilon);

/// Apply the same per-pixel factors to the transforms (psi = M Psi stays consistent).
TransformField scale_transforms(const TransformField& tf, const std::vector<double>& factors);

/// Lift a coarse solution to the full-resolution grid: bilinearly interpolate
/// the coarse displacement, then per full-resolution pixel solve the linear
/// least squares [dx, dy, 1] M Psi_i = d_i(neighbor) stacked over the patch
/// neighbors and all frames. Rank-deficient pixels are flagged and filled from
/// the nearest solved pixel.
TransformField interpolate_transforms(const TransformField& tf_coarse,
                                      const EmbeddingField& field_full,
                                      const PlaneParams& pp_coarse, int patch_size);

struct ObjectiveTerms {
  double temporal = 0.0;  // mean (||psi_i - psi_{i+1}||_eps - ||F_i - F_{i+1}||)^2
  double spatial = 0.0;   // mean squared neighbor-consistency residual
  double total = 0.0;     // temporal + lambda * spatial
};

/// Joint objective over all transforms; both sums are divided by their summand
/// counts before weighting. gradient, when non-null, receives d total / d M per
/// pixel. Evaluation runs in fixed-size pixel tiles with fixed-order reduction,
/// so results do not depend on tiling or thread count.
ObjectiveTerms evaluate_objective(const TransformField& tf, const EmbeddingField& field,
                                  const FeatureNorms& fn, const PipelineConfig& cfg,
                                  std::vector<Eigen::Matrix3Xd>* gradient = nullptr,
                                  int tile_size = 256);

struct OptimizeStats {
  int iterations = 0;
  double initial_objective = 0.0;  // in feature-normalized units (see optimize)
  double final_objective = 0.0;
  bool converged = false;
  std::vector<double> history;  // accepted objective values, non-increasing
};

/// L-BFGS with Armijo backtracking on the joint objective, run in
/// feature-normalized units so the trajectory is invariant to a global
/// intensity scale. Non-convergence within max_iters leaves the best iterate
/// in tf and converged = false.
OptimizeStats optimize(TransformField& tf, const EmbeddingField& field, const FeatureNorms& fn,
                       const PipelineConfig& cfg);

/// d_i(x,y) = third plane parameter; mask 0 where flags (if given) are set.
DisplacementMaps extract_displacement(const PlaneParams& pp,
                                      const std::vector<uint8_t>* flags = nullptr);

}  // namespace speckle
