#include "speckle/reference.hpp"

#include <algorithm>
#include <cmath>

namespace speckle::ref {

Eigen::MatrixXd pairwise_distance_matrix(const FeatureSeries& fs) {
  const int n = fs.frame_count();
  const int k = fs.dim();
  Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (int c = 0; c < k; ++c) {
        const double d = static_cast<double>(fs.vectors(i, c)) - static_cast<double>(fs.vectors(j, c));
        acc += d * d;
      }
      dist(i, j) = dist(j, i) = std::sqrt(acc);
    }
  }
  return dist;
}

Eigen::MatrixXd diffusion_map(const Eigen::MatrixXd& dist, int l, double bandwidth_mult) {
  const int n = static_cast<int>(dist.rows());
  if (n <= l) fail(ErrorCode::DimensionMismatch, "ref::diffusion_map: need N > l");

  // Same bandwidth rule, recomputed with a full sort.
  std::vector<double> off;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) off.push_back(dist(i, j));
  std::sort(off.begin(), off.end());
  double med = off.empty() ? 0.0 : off[off.size() / 2];
  if (med == 0.0 && !off.empty()) {
    double s = 0.0;
    for (double v : off) s += v;
    med = s / static_cast<double>(off.size());
  }
  const double sigma = bandwidth_mult * med;
  if (sigma <= 0.0) return Eigen::MatrixXd::Zero(n, l);

  Eigen::MatrixXd markov(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) markov(i, j) = std::exp(-dist(i, j) * dist(i, j) / (sigma * sigma));
  for (int i = 0; i < n; ++i) markov.row(i) /= markov.row(i).sum();

  Eigen::EigenSolver<Eigen::MatrixXd> es(markov);
  if (es.info() != Eigen::Success) fail(ErrorCode::EigSolveFailure, "general eigensolver failed");

  // Eigenvalues of a row-stochastic kernel matrix are real; sort descending and
  // drop the leading (trivial) one.
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return es.eigenvalues()[a].real() > es.eigenvalues()[b].real();
  });

  Eigen::MatrixXd coords(n, l);
  for (int r = 0; r < l; ++r) {
    const int idx = order[r + 1];
    const double lambda = es.eigenvalues()[idx].real();
    Eigen::VectorXd v = es.eigenvectors().col(idx).real();
    v.normalize();
    canonical_sign(v);
    coords.col(r) = lambda * v;
  }
  return coords;
}

EmbeddingField embed_all(const FrameSequence& seq, const PipelineConfig& cfg,
                         const PixelGrid& grid) {
  EmbeddingField field;
  field.grid = grid;
  field.frame_count = seq.frame_count();
  field.embed_dim = cfg.embed_dim;
  field.coords.resize(grid.size());
  field.degenerate.assign(grid.size(), 0);
  for (int p = 0; p < grid.size(); ++p) {
    const int x = grid.x_at(p % grid.cols);
    const int y = grid.y_at(p / grid.cols);
    const FeatureSeries fs = extract_features(seq, x, y, cfg.patch_size);
    const Eigen::MatrixXd dist = speckle::pairwise_distance_matrix(fs);
    bool degenerate = false;
    field.coords[p] = speckle::diffusion_map(dist, cfg.embed_dim, cfg.bandwidth_mult, &degenerate);
    field.degenerate[p] = degenerate ? 1 : 0;
  }
  return field;
}

Eigen::VectorXd smallest_singular_vector(const Eigen::MatrixXd& a) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  Eigen::VectorXd v = svd.matrixV().col(svd.matrixV().cols() - 1);
  canonical_sign(v);
  return v;
}

Eigen::MatrixXd normal_matrix_dense(const ConsistencySystem& system) {
  const Eigen::MatrixXd a = system.dense();
  return a.transpose() * a;
}

ObjectiveTerms objective_and_gradient(const TransformField& tf, const EmbeddingField& field,
                                      const FeatureNorms& fn, const PipelineConfig& cfg,
                                      std::vector<Eigen::Matrix3Xd>* gradient) {
  const int np = field.grid.size();
  const int n = field.frame_count;
  const double eps2 = cfg.epsilon * cfg.epsilon;
  const auto pairs = enumerate_neighbor_pairs(field.grid, cfg.neighborhood_radius, field.degenerate);

  int active = 0;
  for (int p = 0; p < np; ++p)
    if (!field.degenerate[p]) ++active;
  const double count_t = static_cast<double>(active) * (n - 1);
  const double count_s = static_cast<double>(pairs.size()) * n;

  const double wt = count_t > 0 ? 1.0 / count_t : 0.0;
  const double ws = count_s > 0 ? cfg.lambda / count_s : 0.0;
  if (gradient) gradient->assign(np, Eigen::Matrix3Xd::Zero(3, field.embed_dim));

  double sum_t = 0.0;
  for (int p = 0; p < np; ++p) {
    if (field.degenerate[p]) continue;
    for (int i = 0; i + 1 < n; ++i) {
      const Eigen::Vector3d v =
          tf.transforms[p] * (field.coords[p].row(i) - field.coords[p].row(i + 1)).transpose();
      const double nrm = std::sqrt(v.squaredNorm() + eps2);
      const double resid = nrm - fn.norms(p, i);
      sum_t += resid * resid;
      if (gradient)
        (*gradient)[p] += (2.0 * wt * resid / nrm) * v *
                          (field.coords[p].row(i) - field.coords[p].row(i + 1));
    }
  }

  double sum_s = 0.0;
  for (const auto& pr : pairs) {
    const Eigen::Vector3d e(pr.dx, pr.dy, 1.0);
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d pa = tf.transforms[pr.a] * field.coords[pr.a].row(i).transpose();
      const Eigen::Vector3d pb = tf.transforms[pr.b] * field.coords[pr.b].row(i).transpose();
      const double s = e.dot(pa) - pb[2];
      sum_s += s * s;
      if (gradient) {
        (*gradient)[pr.a] += 2.0 * ws * s * e * field.coords[pr.a].row(i);
        (*gradient)[pr.b].row(2) -= 2.0 * ws * s * field.coords[pr.b].row(i);
      }
    }
  }

  ObjectiveTerms terms;
  terms.temporal = count_t > 0 ? sum_t / count_t : 0.0;
  terms.spatial = count_s > 0 ? sum_s / count_s : 0.0;
  terms.total = terms.temporal + cfg.lambda * terms.spatial;
  return terms;
}

}  // namespace speckle::ref
