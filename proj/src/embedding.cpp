#include "speckle/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "speckle/features.hpp"

namespace speckle {

double kernel_bandwidth(const Eigen::MatrixXd& dist, double bandwidth_mult) {
  const int n = static_cast<int>(dist.rows());
  std::vector<double> off;
  off.reserve(static_cast<size_t>(n) * (n - 1));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) off.push_back(dist(i, j));
  if (off.empty()) return 0.0;
  // Median = element at index m/2 of the sorted off-diagonal multiset.
  const size_t mid = off.size() / 2;
  std::nth_element(off.begin(), off.begin() + mid, off.end());
  double med = off[mid];
  if (med == 0.0) {
    double sum = 0.0;
    for (double v : off) sum += v;
    med = sum / static_cast<double>(off.size());
  }
  return bandwidth_mult * med;
}

/// Fix an eigenvector's sign so its largest-magnitude entry is positive
/// (first such entry on ties). Shared by the consistency eigenvector solve.
void canonical_sign(Eigen::Ref<Eigen::VectorXd> v) {
  int arg = 0;
  double best = -1.0;
  for (int i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]);
    if (a > best) {
      best = a;
      arg = i;
    }
  }
  if (v[arg] < 0.0) v = -v;
}

Eigen::MatrixXd diffusion_map(const Eigen::MatrixXd& dist, int l, double bandwidth_mult,
                              bool* degenerate) {
  const int n = static_cast<int>(dist.rows());
  if (dist.cols() != n) fail(ErrorCode::DimensionMismatch, "distance matrix must be square");
  if (l < 1) fail(ErrorCode::InvalidConfig, "embed dimension must be >= 1");
  if (n <= l)
    fail(ErrorCode::DimensionMismatch,
         "need N > l, got N=" + std::to_string(n) + " l=" + std::to_string(l));
  if (degenerate) *degenerate = false;

  const double sigma = kernel_bandwidth(dist, bandwidth_mult);
  if (sigma <= 0.0) {
    // Static scene: every frame identical, no geometry to embed.
    if (degenerate) *degenerate = true;
    return Eigen::MatrixXd::Zero(n, l);
  }

  const double inv_s2 = 1.0 / (sigma * sigma);
  Eigen::MatrixXd kernel(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) kernel(i, j) = std::exp(-dist(i, j) * dist(i, j) * inv_s2);

  // Eigenpairs of the Markov matrix P = diag(r)^-1 W via the similar symmetric
  // matrix S = diag(r)^-1/2 W diag(r)^-1/2; right eigenvectors are r^-1/2 u.
  const Eigen::VectorXd row_sum = kernel.rowwise().sum();
  const Eigen::VectorXd inv_sqrt = row_sum.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd sym = inv_sqrt.asDiagonal() * kernel * inv_sqrt.asDiagonal();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) fail(ErrorCode::EigSolveFailure, "eigendecomposition failed");

  // Eigenvalues ascend; the top one (= 1, constant Perron vector) is dropped.
  Eigen::MatrixXd coords(n, l);
  for (int r = 0; r < l; ++r) {
    const int idx = n - 2 - r;
    const double lambda = es.eigenvalues()[idx];
    Eigen::VectorXd v = inv_sqrt.asDiagonal() * es.eigenvectors().col(idx);
    v.normalize();
    canonical_sign(v);
    coords.col(r) = lambda * v;
  }
  return coords;
}

EmbeddingField embed_all(const FrameSequence& seq, const PipelineConfig& cfg, const PixelGrid& grid) {
  EmbeddingField field;
  field.grid = grid;
  field.frame_count = seq.frame_count();
  field.embed_dim = cfg.embed_dim;
  field.coords.resize(grid.size());
  field.degenerate.assign(grid.size(), 0);

  const long k = static_cast<long>(cfg.patch_size) * cfg.patch_size;
  if (cfg.embed_dim >= k)
    fail(ErrorCode::InvalidConfig, "embed_dim must be < patch_size^2");

  // Per-pixel work is independent; errors are collected and the lowest-index
  // one is rethrown so failures do not depend on scheduling.
  std::vector<std::string> errors(grid.size());
  std::vector<uint8_t> failed(grid.size(), 0);
#pragma omp parallel for schedule(dynamic, 8)
  for (int p = 0; p < grid.size(); ++p) {
    try {
      const int x = grid.x_at(p % grid.cols);
      const int y = grid.y_at(p / grid.cols);
      const FeatureSeries fs = extract_features(seq, x, y, cfg.patch_size);
      const Eigen::MatrixXd dist = pairwise_distance_matrix(fs);
      bool degenerate = false;
      field.coords[p] = diffusion_map(dist, cfg.embed_dim, cfg.bandwidth_mult, &degenerate);
      field.degenerate[p] = degenerate ? 1 : 0;
    } catch (const std::exception& e) {
      failed[p] = 1;
      errors[p] = e.what();
    }
  }
  for (int p = 0; p < grid.size(); ++p)
    if (failed[p])
      fail(ErrorCode::EigSolveFailure,
           "pixel " + std::to_string(p) + " failed to embed: " + errors[p]);
  return field;
}

}  // namespace speckle
