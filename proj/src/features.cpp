#include "speckle/features.hpp"

#include <cmath>

namespace speckle {

FeatureSeries extract_features(const FrameSequence& seq, int x, int y, int patch_size) {
  if (patch_size < 3 || patch_size % 2 == 0)
    fail(ErrorCode::InvalidConfig, "patch_size must be odd and >= 3");
  if (seq.frame_count() < 1) fail(ErrorCode::DimensionMismatch, "empty frame sequence");
  const int r = patch_size / 2;
  const int w = seq.width(), h = seq.height();
  if (x - r < 0 || y - r < 0 || x + r >= w || y + r >= h)
    fail(ErrorCode::PatchOutOfBounds, "pixel (" + std::to_string(x) + "," + std::to_string(y) +
                                          ") with patch " + std::to_string(patch_size) + " on " +
                                          std::to_string(w) + "x" + std::to_string(h));

  FeatureSeries fs;
  fs.x = x;
  fs.y = y;
  fs.patch_size = patch_size;
  const int k = patch_size * patch_size;
  fs.vectors.resize(seq.frame_count(), k);
  for (int i = 0; i < seq.frame_count(); ++i) {
    const Image& frame = seq.frames[i];
    int col = 0;
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) fs.vectors(i, col++) = frame.at(x + dx, y + dy);
  }
  return fs;
}

double feature_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    fail(ErrorCode::DimensionMismatch, "feature_distance: " + std::to_string(a.size()) + " vs " +
                                           std::to_string(b.size()));
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

Eigen::MatrixXd pairwise_distance_matrix(const FeatureSeries& fs) {
  const int n = fs.frame_count();
  if (n < 2) fail(ErrorCode::DimensionMismatch, "pairwise_distance_matrix needs N >= 2");
  // Gram route: D^2 = g_i + g_j - 2 G_ij. Cancellation can leave tiny negatives
  // for near-identical rows; clamp before the sqrt.
  const Eigen::MatrixXd f = fs.vectors.cast<double>();
  const Eigen::MatrixXd gram = f * f.transpose();
  Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double sq = gram(i, i) + gram(j, j) - 2.0 * gram(i, j);
      const double d = std::sqrt(std::max(sq, 0.0));
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }
  return dist;
}

FeatureNorms compute_feature_norms(const FrameSequence& seq, const PixelGrid& grid, int patch_size) {
  const int n = seq.frame_count();
  if (n < 2) fail(ErrorCode::DimensionMismatch, "compute_feature_norms needs N >= 2");
  FeatureNorms fn;
  fn.grid = grid;
  fn.patch_size = patch_size;
  fn.norms.resize(grid.size(), n - 1);
  const int r = patch_size / 2;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < grid.size(); ++p) {
    const int x = grid.x_at(p % grid.cols);
    const int y = grid.y_at(p / grid.cols);
    for (int i = 0; i + 1 < n; ++i) {
      const Image& a = seq.frames[i];
      const Image& b = seq.frames[i + 1];
      double acc = 0.0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const double d = static_cast<double>(a.at(x + dx, y + dy)) -
                           static_cast<double>(b.at(x + dx, y + dy));
          acc += d * d;
        }
      fn.norms(p, i) = std::sqrt(acc);
    }
  }
  return fn;
}

}  // namespace speckle
