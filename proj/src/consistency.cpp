#include "speckle/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "speckle/rng.hpp"

namespace speckle {

EmbeddingField normalize_temporal_std(const EmbeddingField& field, double epsilon) {
  if (field.frame_count < 2) fail(ErrorCode::DimensionMismatch, "normalization needs N >= 2");
  if (!(epsilon > 0.0)) fail(ErrorCode::InvalidConfig, "epsilon must be > 0");
  EmbeddingField out = field;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < field.grid.size(); ++p) {
    Eigen::MatrixXd& m = out.coords[p];
    for (int c = 0; c < m.cols(); ++c) {
      const double mean = m.col(c).mean();
      const double var = (m.col(c).array() - mean).square().sum() / static_cast<double>(m.rows());
      m.col(c) /= std::sqrt(var) + epsilon;
    }
  }
  return out;
}

std::vector<NeighborPair> enumerate_neighbor_pairs(const PixelGrid& grid, int radius,
                                                   const std::vector<uint8_t>& skip) {
  if (radius < 1) fail(ErrorCode::InvalidConfig, "neighborhood radius must be >= 1");
  // Every ordered pair appears once (the full window, 8 neighbors at radius 1):
  // each pixel's plane is extrapolated to every neighbor. A one-directional
  // enumeration would leave the slope coefficients of some pixels out of every
  // row, giving A a structural null space.
  std::vector<NeighborPair> pairs;
  for (int j = 0; j < grid.rows; ++j) {
    for (int i = 0; i < grid.cols; ++i) {
      const int p = grid.index(i, j);
      if (!skip.empty() && skip[p]) continue;
      for (int dj = -radius; dj <= radius; ++dj) {
        for (int di = -radius; di <= radius; ++di) {
          if (di == 0 && dj == 0) continue;
          const int ni = i + di, nj = j + dj;
          if (ni < 0 || ni >= grid.cols || nj < 0 || nj >= grid.rows) continue;
          const int q = grid.index(ni, nj);
          if (!skip.empty() && skip[q]) continue;
          pairs.push_back({p, q, static_cast<double>(di * grid.stride),
                           static_cast<double>(dj * grid.stride)});
        }
      }
    }
  }
  return pairs;
}

ConsistencySystem::ConsistencySystem(const EmbeddingField& field, int radius) : field_(&field) {
  if (field.grid.size() < 2) fail(ErrorCode::EmptySystem, "grid has fewer than 2 pixels");
  pairs_ = enumerate_neighbor_pairs(field.grid, radius, field.degenerate);
  if (pairs_.empty()) fail(ErrorCode::EmptySystem, "no neighbor pairs within the window");

  slot_.assign(field.grid.size(), -1);
  std::vector<uint8_t> used(field.grid.size(), 0);
  for (const auto& pr : pairs_) used[pr.a] = used[pr.b] = 1;
  for (int p = 0; p < field.grid.size(); ++p) {
    if (used[p]) {
      slot_[p] = static_cast<int>(active_.size());
      active_.push_back(p);
    }
  }
}

Eigen::VectorXd ConsistencySystem::apply(const Eigen::VectorXd& m) const {
  if (m.size() != col_count())
    fail(ErrorCode::DimensionMismatch, "apply: vector length " + std::to_string(m.size()) +
                                           " != unknowns " + std::to_string(col_count()));
  const int l = field_->embed_dim;
  const int n = field_->frame_count;
  const int bs = block_size();
  Eigen::VectorXd out(row_count());
#pragma omp parallel for schedule(static)
  for (size_t pp = 0; pp < pairs_.size(); ++pp) {
    const NeighborPair& pr = pairs_[pp];
    using RowM = Eigen::Matrix<double, 3, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowM> ma(m.data() + static_cast<long>(slot_[pr.a]) * bs, 3, l);
    Eigen::Map<const RowM> mb(m.data() + static_cast<long>(slot_[pr.b]) * bs, 3, l);
    const Eigen::Vector3d e(pr.dx, pr.dy, 1.0);
    // r_i = e . (Ma Psi_a,i) - height of (Mb Psi_b,i)
    const Eigen::VectorXd lhs = field_->coords[pr.a] * (ma.transpose() * e);
    const Eigen::VectorXd rhs = field_->coords[pr.b] * mb.row(2).transpose();
    out.segment(static_cast<long>(pp) * n, n) = lhs - rhs;
  }
  return out;
}

Eigen::SparseMatrix<double> ConsistencySystem::normal_matrix() const {
  const int l = field_->embed_dim;
  const int bs = block_size();
  const long n_unknowns = col_count();

  // Per-pair frame sums; e is constant across frames so each pair contributes
  // kron(outer(e,e), Ga), -kron(outer(e,f), Gab), kron(outer(f,f), Gb).
  struct PairGrams {
    Eigen::MatrixXd ga, gab, gb;
  };
  std::vector<PairGrams> grams(pairs_.size());
#pragma omp parallel for schedule(static)
  for (size_t pp = 0; pp < pairs_.size(); ++pp) {
    const Eigen::MatrixXd& psa = field_->coords[pairs_[pp].a];
    const Eigen::MatrixXd& psb = field_->coords[pairs_[pp].b];
    grams[pp].ga = psa.transpose() * psa;
    grams[pp].gab = psa.transpose() * psb;
    grams[pp].gb = psb.transpose() * psb;
  }

  // Accumulate blocks in deterministic (slotA, slotB) order.
  std::map<std::pair<int, int>, Eigen::MatrixXd> blocks;
  auto block = [&](int sa, int sb) -> Eigen::MatrixXd& {
    auto [it, inserted] = blocks.try_emplace({sa, sb}, Eigen::MatrixXd());
    if (inserted) it->second = Eigen::MatrixXd::Zero(bs, bs);
    return it->second;
  };
  for (size_t pp = 0; pp < pairs_.size(); ++pp) {
    const NeighborPair& pr = pairs_[pp];
    const int sa = slot_[pr.a], sb = slot_[pr.b];
    const Eigen::Vector3d e(pr.dx, pr.dy, 1.0);
    Eigen::MatrixXd& haa = block(sa, sa);
    for (int c = 0; c < 3; ++c)
      for (int c2 = 0; c2 < 3; ++c2)
        haa.block(c * l, c2 * l, l, l) += (e[c] * e[c2]) * grams[pp].ga;
    Eigen::MatrixXd& hab = block(sa, sb);
    for (int c = 0; c < 3; ++c) hab.block(c * l, 2 * l, l, l) -= e[c] * grams[pp].gab;
    Eigen::MatrixXd& hba = block(sb, sa);
    for (int c = 0; c < 3; ++c)
      hba.block(2 * l, c * l, l, l) -= e[c] * grams[pp].gab.transpose();
    block(sb, sb).block(2 * l, 2 * l, l, l) += grams[pp].gb;
  }

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(blocks.size() * static_cast<size_t>(bs) * bs);
  for (const auto& [key, mat] : blocks) {
    const long r0 = static_cast<long>(key.first) * bs;
    const long c0 = static_cast<long>(key.second) * bs;
    for (int r = 0; r < bs; ++r)
      for (int c = 0; c < bs; ++c)
        if (mat(r, c) != 0.0) triplets.emplace_back(r0 + r, c0 + c, mat(r, c));
  }
  Eigen::SparseMatrix<double> h(n_unknowns, n_unknowns);
  h.setFromTriplets(triplets.begin(), triplets.end());
  return h;
}

Eigen::MatrixXd ConsistencySystem::dense() const {
  const long rows = row_count(), cols = col_count();
  if (rows * cols > 80'000'000L)
    fail(ErrorCode::InvalidConfig, "dense() requested for an oversized system");
  const int l = field_->embed_dim;
  const int n = field_->frame_count;
  const int bs = block_size();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, cols);
  for (size_t pp = 0; pp < pairs_.size(); ++pp) {
    const NeighborPair& pr = pairs_[pp];
    const Eigen::Vector3d e(pr.dx, pr.dy, 1.0);
    const long ca = static_cast<long>(slot_[pr.a]) * bs;
    const long cb = static_cast<long>(slot_[pr.b]) * bs;
    for (int i = 0; i < n; ++i) {
      const long row = static_cast<long>(pp) * n + i;
      for (int c = 0; c < 3; ++c)
        for (int d = 0; d < l; ++d) a(row, ca + c * l + d) += e[c] * field_->coords[pr.a](i, d);
      for (int d = 0; d < l; ++d) a(row, cb + 2 * l + d) -= field_->coords[pr.b](i, d);
    }
  }
  return a;
}

ConsistencySystem build_consistency_system(const EmbeddingField& field, int radius) {
  return ConsistencySystem(field, radius);
}

namespace {

/// How many leading eigenvalues sit inside the gauge window above the minimum.
/// The consistency model determines solutions only up to per-frame affine
/// height fields, which show up as a cluster of near-equal bottom eigenvalues.
int gauge_count(const Eigen::VectorXd& lambdas_ascending, double scale, int cap) {
  int j = 1;
  const double window = lambdas_ascending[0] * 2.5 + 1e-12 * scale;
  while (j < std::min<int>(cap, static_cast<int>(lambdas_ascending.size())) &&
         lambdas_ascending[j] <= window)
    ++j;
  return j;
}

/// Canonical member of a (near-)degenerate bottom subspace: the unit vector in
/// span(V) whose per-pixel block energies are most uniform (minimal sum of
/// squared block energies). Gauge ramps concentrate or cancel amplitude, the
/// physical solution spreads it; this is the higher-dimensional analogue of the
/// sign convention. Deterministic fixed-point iteration (eigenvector of the
/// energy-weighted Gram mix) from several starts.
Eigen::VectorXd select_uniform_member(const Eigen::MatrixXd& basis, int block_size) {
  const int j = static_cast<int>(basis.cols());
  if (j == 1) return basis.col(0);
  const long blocks = basis.rows() / block_size;

  std::vector<Eigen::MatrixXd> grams(blocks);
  for (long p = 0; p < blocks; ++p) {
    const auto rows = basis.middleRows(p * block_size, block_size);
    grams[p] = rows.transpose() * rows;
  }

  // Block energies e_p = c^T G_p c sum to 1 for unit c; minimizing sum e_p^2
  // spreads the energy. Stationary points satisfy (sum e_p G_p) c = mu c, so
  // iterate toward the smallest eigenvector of the energy-weighted mix,
  // from several deterministic starts, and keep the best.
  auto energy_sq = [&](const Eigen::VectorXd& c) {
    double f = 0.0;
    for (long p = 0; p < blocks; ++p) {
      const double e = c.dot(grams[p] * c);
      f += e * e;
    }
    return f;
  };
  auto refine_from = [&](Eigen::VectorXd c) {
    double f = energy_sq(c);
    for (int iter = 0; iter < 40; ++iter) {
      Eigen::MatrixXd mix = Eigen::MatrixXd::Zero(j, j);
      for (long p = 0; p < blocks; ++p) mix += c.dot(grams[p] * c) * grams[p];
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mix);
      Eigen::VectorXd next = es.eigenvectors().col(0);
      if (next.dot(c) < 0.0) next = -next;
      const Eigen::VectorXd damped = (0.5 * c + 0.5 * next).normalized();
      const double fn = energy_sq(next), fd = energy_sq(damped);
      Eigen::VectorXd best_c = fn <= fd ? next : damped;
      const double fb = std::min(fn, fd);
      if (fb >= f - 1e-15) break;
      c = best_c;
      f = fb;
    }
    return std::make_pair(c, f);
  };

  Eigen::VectorXd best = Eigen::VectorXd::Unit(j, 0);
  double best_f = energy_sq(best);
  for (int s = 0; s < j + 1; ++s) {
    Eigen::VectorXd start =
        s < j ? Eigen::VectorXd::Unit(j, s) : Eigen::VectorXd::Constant(j, 1.0).normalized();
    auto [c, f] = refine_from(start);
    if (f < best_f) {
      best = c;
      best_f = f;
    }
  }
  return basis * best;
}

/// A couple of shift-inverted refinement steps: pulls the candidate vector to
/// the bottom of the spectrum at machine precision without leaving a
/// degenerate null space (all null members are amplified equally).
template <typename Solver>
Eigen::VectorXd polish(const Solver& solver, Eigen::VectorXd v) {
  for (int it = 0; it < 2; ++it) {
    Eigen::VectorXd y = solver.solve(v);
    const double norm = y.norm();
    if (!(norm > 0.0) || !y.allFinite()) break;
    v = y / norm;
  }
  return v;
}

Eigen::VectorXd smallest_eigenvector_dense(const Eigen::SparseMatrix<double>& h, int block_size) {
  const Eigen::MatrixXd dense_h(h);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_h);
  if (es.info() != Eigen::Success) fail(ErrorCode::EigSolveFailure, "dense eigensolver failed");
  const long n = dense_h.rows();
  const double inf_norm = dense_h.cwiseAbs().rowwise().sum().maxCoeff();

  const int j = gauge_count(es.eigenvalues(), inf_norm, 8);
  Eigen::VectorXd v = select_uniform_member(es.eigenvectors().leftCols(j), block_size);

  // Two near-zero-shift steps: exact-null members are amplified equally, a
  // split cluster is reweighted only mildly, and contamination from above the
  // cluster is scrubbed.
  const double shift = 1e-12 * std::max(dense_h.trace() / static_cast<double>(n), 0.0);
  if (shift > 0.0) {
    Eigen::MatrixXd reg = dense_h;
    reg.diagonal().array() += shift;
    v = polish(Eigen::PartialPivLU<Eigen::MatrixXd>(reg), v);
  }
  return v;
}

Eigen::VectorXd smallest_eigenvector_iterative(const Eigen::SparseMatrix<double>& h,
                                               int block_size, const EigSolveOptions& opts) {
  const long n = h.rows();
  double trace = 0.0;
  for (long i = 0; i < n; ++i) trace += h.coeff(i, i);
  double inf_norm = 0.0;
  {
    Eigen::VectorXd row_abs = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < h.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(h, k); it; ++it)
        row_abs[it.row()] += std::abs(it.value());
    inf_norm = row_abs.maxCoeff();
  }
  if (inf_norm == 0.0) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    v[0] = 1.0;
    return v;
  }

  // Shift-invert Lanczos with full reorthogonalization on B = (H + dI)^-1:
  // the smallest eigenpair of H is B's largest. One factorization; restarts
  // reuse the converged Ritz vector. Handles both well-separated bottoms and
  // the dense near-null clusters the consistency systems produce.
  const double tol_abs = opts.tol * inf_norm;
  const double shift = 1e-10 * std::max(trace / static_cast<double>(n), 1e-300);

  Eigen::SparseMatrix<double> reg = h;
  for (long i = 0; i < n; ++i) reg.coeffRef(i, i) += shift;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  solver.compute(reg);
  if (solver.info() != Eigen::Success) {
    for (long i = 0; i < n; ++i) reg.coeffRef(i, i) += 1e6 * shift;
    solver.compute(reg);
    if (solver.info() != Eigen::Success)
      fail(ErrorCode::EigSolveFailure, "sparse factorization failed");
  }

  uint64_t sm = 0x5eed5eed5eedULL;
  Eigen::VectorXd v0(n);
  for (long i = 0; i < n; ++i) v0[i] = static_cast<double>(splitmix64(sm) >> 11) * 0x1.0p-53 - 0.5;
  v0.normalize();

  const int krylov = static_cast<int>(std::min<long>(32, n));
  double rho_prev = std::numeric_limits<double>::infinity();
  const int restarts = std::max(1, opts.max_iters / krylov + 1);
  for (int restart = 0; restart < restarts; ++restart) {
    Eigen::MatrixXd basis(n, krylov);
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(krylov);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(krylov);
    basis.col(0) = v0;
    int built = 0;
    for (int j = 0; j < krylov; ++j) {
      Eigen::VectorXd w = solver.solve(basis.col(j));
      if (!w.allFinite()) fail(ErrorCode::EigSolveFailure, "shift-invert solve became non-finite");
      alpha[j] = basis.col(j).dot(w);
      // full reorthogonalization, twice for stability
      for (int pass = 0; pass < 2; ++pass)
        w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
      built = j + 1;
      if (j + 1 == krylov) break;
      beta[j] = w.norm();
      if (beta[j] <= 1e-14 * std::abs(alpha[j]) || beta[j] == 0.0) break;  // invariant subspace
      basis.col(j + 1) = w / beta[j];
    }

    Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(built, built);
    for (int j = 0; j < built; ++j) {
      tri(j, j) = alpha[j];
      if (j + 1 < built) tri(j, j + 1) = tri(j + 1, j) = beta[j];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tri);
    if (es.info() != Eigen::Success) fail(ErrorCode::EigSolveFailure, "Ritz solve failed");

    // Ritz pairs of B in descending order map to H's smallest eigenvalues.
    const int avail = built;
    Eigen::MatrixXd ritz(n, avail);
    Eigen::VectorXd rho_h(avail);
    for (int r = 0; r < avail; ++r) {
      ritz.col(r) = basis.leftCols(built) * es.eigenvectors().col(built - 1 - r);
      ritz.col(r).normalize();
      rho_h[r] = ritz.col(r).dot(h * ritz.col(r));
    }
    const Eigen::VectorXd hy = h * ritz.col(0);
    const double rho = rho_h[0];
    const double resid = (hy - rho * ritz.col(0)).norm();
    v0 = ritz.col(0);

    const bool done = resid <= tol_abs ||
                      std::abs(rho_prev - rho) <= 1e-12 * inf_norm + 1e-9 * std::abs(rho);
    if (done) {
      const int j = gauge_count(rho_h.head(std::min(avail, 8)), inf_norm, std::min(avail, 8));
      return polish(solver, select_uniform_member(ritz.leftCols(j), block_size));
    }
    rho_prev = rho;
  }
  fail(ErrorCode::ConvergenceFailure,
       "shift-invert Lanczos did not reach tolerance in " + std::to_string(restarts) +
           " restarts");
}

}  // namespace

TransformField solve_smallest_eigenvector(const ConsistencySystem& system,
                                          const EigSolveOptions& opts) {
  const long n = system.col_count();
  if (n <= 0) fail(ErrorCode::EmptySystem, "system has no unknowns");
  const Eigen::SparseMatrix<double> h = system.normal_matrix();

  Eigen::VectorXd m;
  if (!opts.force_iterative && n <= opts.dense_threshold) {
    m = smallest_eigenvector_dense(h, system.block_size());
  } else {
    m = smallest_eigenvector_iterative(h, system.block_size(), opts);
  }
  m.normalize();
  canonical_sign(m);

  const EmbeddingField& field = system.field();
  const int l = field.embed_dim;
  const int bs = system.block_size();
  TransformField tf;
  tf.grid = field.grid;
  tf.embed_dim = l;
  tf.transforms.assign(field.grid.size(), Eigen::Matrix3Xd::Zero(3, l));
  tf.flags.assign(field.grid.size(), 1);
  for (size_t s = 0; s < system.active_pixels().size(); ++s) {
    const int p = system.active_pixels()[s];
    using RowM = Eigen::Matrix<double, 3, Eigen::Dynamic, Eigen::RowMajor>;
    tf.transforms[p] = Eigen::Map<const RowM>(m.data() + s * bs, 3, l);
    tf.flags[p] = 0;
  }
  return tf;
}

PlaneParams apply_transform(const EmbeddingField& field, const TransformField& tf) {
  if (!field.grid.same_layout(tf.grid))
    fail(ErrorCode::DimensionMismatch, "apply_transform: grids differ");
  if (field.embed_dim != tf.embed_dim)
    fail(ErrorCode::DimensionMismatch, "apply_transform: embed dims differ");
  PlaneParams pp;
  pp.grid = field.grid;
  pp.psi.resize(field.grid.size());
#pragma omp parallel for schedule(static)
  for (int p = 0; p < field.grid.size(); ++p)
    pp.psi[p] = tf.transforms[p] * field.coords[p].transpose();
  return pp;
}

}  // namespace speckle
