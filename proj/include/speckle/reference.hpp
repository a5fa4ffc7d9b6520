#pragma once

#include <Eigen/Dense>

#include "speckle/consistency.hpp"
#include "speckle/embedding.hpp"
#include "speckle/features.hpp"
#include "speckle/refine.hpp"

// Plain serial implementations kept alongside the production kernels. They are
// written the straightforward way (naive loops, general-purpose solvers) and
// serve two purposes: correctness baselines for the OpenMP kernels, and the
// slow side of the benchmark. They deliberately take different numerical
// routes than the production code wherever the production code is clever.
namespace speckle::ref {

/// Element-wise double loop (no Gram factorization).
Eigen::MatrixXd pairwise_distance_matrix(const FeatureSeries& fs);

/// Diffusion map via the general (non-symmetric) eigendecomposition of the
/// Markov matrix itself, same ordering and sign conventions as production.
Eigen::MatrixXd diffusion_map(const Eigen::MatrixXd& dist, int l, double bandwidth_mult);

/// Serial loop over pixels, production per-pixel path.
EmbeddingField embed_all(const FrameSequence& seq, const PipelineConfig& cfg,
                         const PixelGrid& grid);

/// Smallest right singular vector of dense A via SVD (not the normal equations).
Eigen::VectorXd smallest_singular_vector(const Eigen::MatrixXd& a);

/// Naive triplet-per-row assembly of A^T A from the dense row definition.
Eigen::MatrixXd normal_matrix_dense(const ConsistencySystem& system);

/// Single-threaded objective/gradient with direct summation (no tiling, no
/// cached projections).
ObjectiveTerms objective_and_gradient(const TransformField& tf, const EmbeddingField& field,
                                      const FeatureNorms& fn, const PipelineConfig& cfg,
                                      std::vector<Eigen::Matrix3Xd>* gradient = nullptr);

}  // namespace speckle::ref
