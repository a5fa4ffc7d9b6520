#pragma once

#include <Eigen/Dense>
#include <vector>

#include "speckle/config.hpp"
#include "speckle/types.hpp"

namespace speckle {

/// Per-pixel embedded coordinates: coords[p] is N x l, row i = embedded frame i,
/// columns ordered by decreasing eigenvalue.
struct EmbeddingField {
  PixelGrid grid;
  int frame_count = 0;
  int embed_dim = 0;
  std::vector<Eigen::MatrixXd> coords;
  std::vector<uint8_t> degenerate;  // 1 = pixel kept with all-zero coordinates

  const Eigen::MatrixXd& at(int p) const { return coords[p]; }
};

/// Diffusion-map embedding of one N x N distance matrix.
///
/// Kernel W_ij = exp(-D_ij^2 / sigma^2) with sigma = bandwidth_mult * median
/// off-diagonal distance, row-normalized to a Markov matrix; returns the l
/// largest nontrivial eigenpairs as columns lambda_r * v_r (unit-norm right
/// eigenvectors, largest-magnitude entry made positive). A distance matrix with
/// no off-diagonal structure yields all-zero coordinates and sets *degenerate.
Eigen::MatrixXd diffusion_map(const Eigen::MatrixXd& dist, int l, double bandwidth_mult,
                              bool* degenerate = nullptr);

/// Kernel bandwidth rule shared with the serial reference: median off-diagonal
/// entry (upper median), falling back to the mean when the median is zero.
double kernel_bandwidth(const Eigen::MatrixXd& dist, double bandwidth_mult);

/// Largest-magnitude entry made positive (first such entry on ties).
void canonical_sign(Eigen::Ref<Eigen::VectorXd> v);

/// Embed every grid pixel independently (parallel; output independent of scheduling).
EmbeddingField embed_all(const FrameSequence& seq, const PipelineConfig& cfg, const PixelGrid& grid);

}  // namespace speckle
