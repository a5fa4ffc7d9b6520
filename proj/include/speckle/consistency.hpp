#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <vector>

#include "speckle/embedding.hpp"
#include "speckle/types.hpp"

namespace speckle {

/// Per-pixel 3 x l transforms mapping embedded coordinates to plane parameters.
struct TransformField {
  PixelGrid grid;
  int embed_dim = 0;
  std::vector<Eigen::Matrix3Xd> transforms;
  std::vector<uint8_t> flags;  // 1 = no constraints contributed / filled afterwards

  const Eigen::Matrix3Xd& at(int p) const { return transforms[p]; }
};

/// Plane parameters psi = (slope_x, slope_y, height) per pixel per frame;
/// psi[p] is 3 x N with one column per frame. The third row is the displacement.
struct PlaneParams {
  PixelGrid grid;
  std::vector<Eigen::Matrix3Xd> psi;

  int frame_count() const { return psi.empty() ? 0 : static_cast<int>(psi.front().cols()); }
};

/// Divide each embedding column by its temporal standard deviation plus epsilon,
/// so pixels with small embeddings cannot dominate the eigenvector solve.
EmbeddingField normalize_temporal_std(const EmbeddingField& field, double epsilon);

/// One neighbor pair: constraint rows say pixel a's local plane, evaluated at
/// pixel b's position, matches pixel b's height. dx, dy are in pixel units.
struct NeighborPair {
  int a = 0, b = 0;
  double dx = 0.0, dy = 0.0;
};

/// Half-window enumeration: each unordered neighbor pair within Chebyshev
/// `radius` (grid units) appears exactly once, directed from the scan-order
/// smaller pixel to the larger. Pixels with skip[p] != 0 contribute no pairs.
std::vector<NeighborPair> enumerate_neighbor_pairs(const PixelGrid& grid, int radius,
                                                   const std::vector<uint8_t>& skip);

/// Homogeneous system A m = 0 over the stacked per-pixel transforms, kept in
/// operator form: rows are generated on the fly from the embedding, never stored.
/// Row order: pairs in enumeration order, frames innermost. Unknown layout:
/// active pixels in grid order, each a row-major 3 x l block.
class ConsistencySystem {
 public:
  ConsistencySystem(const EmbeddingField& field, int radius);

  long row_count() const { return static_cast<long>(pairs_.size()) * field_->frame_count; }
  long col_count() const { return static_cast<long>(active_.size()) * 3 * field_->embed_dim; }
  int block_size() const { return 3 * field_->embed_dim; }

  const std::vector<NeighborPair>& pairs() const { return pairs_; }
  const std::vector<int>& active_pixels() const { return active_; }
  int active_slot(int pixel) const { return slot_[pixel]; }  // -1 when inactive
  const EmbeddingField& field() const { return *field_; }

  /// A * m in row order; Sum E_s for a candidate m equals apply(m).squaredNorm().
  Eigen::VectorXd apply(const Eigen::VectorXd& m) const;
  double residual_sq(const Eigen::VectorXd& m) const { return apply(m).squaredNorm(); }

  /// Assembled normal matrix A^T A (block sparse, deterministic order).
  Eigen::SparseMatrix<double> normal_matrix() const;

  /// Dense A for small systems (tests and the dense solve path).
  Eigen::MatrixXd dense() const;

 private:
  const EmbeddingField* field_;
  std::vector<NeighborPair> pairs_;
  std::vector<int> active_;  // pixel indices with constraints
  std::vector<int> slot_;    // pixel index -> active slot
};

ConsistencySystem build_consistency_system(const EmbeddingField& field, int radius);

struct EigSolveOptions {
  int dense_threshold = 2000;  // unknown count at or below which the dense path is used
  bool force_iterative = false;
  int max_iters = 100;
  double tol = 1e-12;  // eigenresidual tolerance, relative to the operator scale
};

/// m = argmin ||A m|| s.t. ||m|| = 1, reshaped to per-pixel transforms with the
/// canonical sign. Inactive pixels get zero transforms and a flag.
TransformField solve_smallest_eigenvector(const ConsistencySystem& system,
                                          const EigSolveOptions& opts = {});

/// psi_i = M * Psi_i per pixel per frame.
PlaneParams apply_transform(const EmbeddingField& field, const TransformField& tf);

}  // namespace speckle
