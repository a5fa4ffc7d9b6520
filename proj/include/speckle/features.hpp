#pragma once

#include <Eigen/Dense>
#include <span>

#include "speckle/types.hpp"

namespace speckle {

/// Per-pixel feature vectors: row i holds the patch intensities of frame i in
/// fixed row-major patch order, so rows are comparable across frames.
struct FeatureSeries {
  int x = 0, y = 0;
  int patch_size = 0;
  Eigen::MatrixXf vectors;  // N x patch_size^2

  int frame_count() const { return static_cast<int>(vectors.rows()); }
  int dim() const { return static_cast<int>(vectors.cols()); }
};

FeatureSeries extract_features(const FrameSequence& seq, int x, int y, int patch_size);

/// Euclidean distance, accumulated in double.
double feature_distance(std::span<const float> a, std::span<const float> b);

/// D[i][j] = ||row_i - row_j||, exact zero diagonal, exactly symmetric.
Eigen::MatrixXd pairwise_distance_matrix(const FeatureSeries& fs);

/// Consecutive-frame feature norms ||F_i - F_{i+1}|| for every grid pixel;
/// shared by the scale initialization and the temporal objective term.
struct FeatureNorms {
  PixelGrid grid;
  int patch_size = 0;
  Eigen::MatrixXd norms;  // grid.size() x (N-1)
};

FeatureNorms compute_feature_norms(const FrameSequence& seq, const PixelGrid& grid, int patch_size);

}  // namespace speckle
