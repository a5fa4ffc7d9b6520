#include "speckle/refine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace speckle {

std::vector<double> init_scale_factors(const PlaneParams& pp, const FeatureNorms& fn,
                                       double epsilon) {
  if (!pp.grid.same_layout(fn.grid))
    fail(ErrorCode::DimensionMismatch, "init_scale: grids differ");
  const int n = pp.frame_count();
  if (n < 2) fail(ErrorCode::DimensionMismatch, "init_scale needs N >= 2");
  std::vector<double> factors(pp.grid.size(), 1.0);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < pp.grid.size(); ++p) {
    double m_psi = 0.0, m_f = 0.0;
    for (int i = 0; i + 1 < n; ++i) {
      m_psi += (pp.psi[p].col(i) - pp.psi[p].col(i + 1)).squaredNorm();
      m_f += fn.norms(p, i) * fn.norms(p, i);
    }
    m_psi /= static_cast<double>(n);
    m_f /= static_cast<double>(n);
    factors[p] = m_f / (m_psi + epsilon);
  }
  return factors;
}

PlaneParams init_scale(const PlaneParams& pp, const FeatureNorms& fn, double epsilon) {
  const std::vector<double> factors = init_scale_factors(pp, fn, epsilon);
  PlaneParams out = pp;
  for (int p = 0; p < pp.grid.size(); ++p) out.psi[p] *= factors[p];
  return out;
}

TransformField scale_transforms(const TransformField& tf, const std::vector<double>& factors) {
  if (factors.size() != static_cast<size_t>(tf.grid.size()))
    fail(ErrorCode::DimensionMismatch, "scale_transforms: factor count mismatch");
  TransformField out = tf;
  for (int p = 0; p < tf.grid.size(); ++p) out.transforms[p] *= factors[p];
  return out;
}

namespace {

// Bilinear weights of an image-coordinate point in a coarse grid, clamped at
// the borders (constant extrapolation).
struct BilinearSample {
  int p00, p10, p01, p11;
  double w00, w10, w01, w11;
};

BilinearSample bilinear_in_grid(const PixelGrid& grid, double x, double y) {
  double gx = (x - grid.x0) / grid.stride;
  double gy = (y - grid.y0) / grid.stride;
  gx = std::clamp(gx, 0.0, static_cast<double>(grid.cols - 1));
  gy = std::clamp(gy, 0.0, static_cast<double>(grid.rows - 1));
  int i0 = std::min(static_cast<int>(gx), grid.cols - 2 >= 0 ? grid.cols - 2 : 0);
  int j0 = std::min(static_cast<int>(gy), grid.rows - 2 >= 0 ? grid.rows - 2 : 0);
  i0 = std::max(i0, 0);
  j0 = std::max(j0, 0);
  const int i1 = std::min(i0 + 1, grid.cols - 1);
  const int j1 = std::min(j0 + 1, grid.rows - 1);
  const double fx = gx - i0, fy = gy - j0;
  BilinearSample s;
  s.p00 = grid.index(i0, j0);
  s.p10 = grid.index(i1, j0);
  s.p01 = grid.index(i0, j1);
  s.p11 = grid.index(i1, j1);
  s.w00 = (1 - fx) * (1 - fy);
  s.w10 = fx * (1 - fy);
  s.w01 = (1 - fx) * fy;
  s.w11 = fx * fy;
  return s;
}

bool spd_rank_ok(const Eigen::MatrixXd& sym, double rel_tol = 1e-10) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const double top = es.eigenvalues().maxCoeff();
  if (!(top > 0.0)) return false;
  return es.eigenvalues().minCoeff() > rel_tol * top;
}

}  // namespace

TransformField interpolate_transforms(const TransformField& tf_coarse,
                                      const EmbeddingField& field_full,
                                      const PlaneParams& pp_coarse, int patch_size) {
  if (!tf_coarse.grid.same_layout(pp_coarse.grid))
    fail(ErrorCode::DimensionMismatch, "interpolate_transforms: coarse grids differ");
  const PixelGrid& coarse = pp_coarse.grid;
  const PixelGrid& full = field_full.grid;
  const int n = field_full.frame_count;
  const int l = field_full.embed_dim;
  const int r = patch_size / 2;

  // Coarse displacement rows, one per pixel, for fast bilinear gathering.
  Eigen::MatrixXd coarse_d(coarse.size(), n);
  for (int p = 0; p < coarse.size(); ++p) coarse_d.row(p) = pp_coarse.psi[p].row(2);

  const int x_min = full.x0, x_max = full.x_at(full.cols - 1);
  const int y_min = full.y0, y_max = full.y_at(full.rows - 1);

  TransformField out;
  out.grid = full;
  out.embed_dim = l;
  out.transforms.assign(full.size(), Eigen::Matrix3Xd::Zero(3, l));
  out.flags.assign(full.size(), 1);

#pragma omp parallel for schedule(dynamic, 16)
  for (int p = 0; p < full.size(); ++p) {
    if (field_full.degenerate[p]) continue;  // stays flagged, filled below
    const int x = full.x_at(p % full.cols);
    const int y = full.y_at(p / full.cols);
    const Eigen::MatrixXd& psi = field_full.coords[p];  // N x l

    Eigen::Matrix3d e_gram = Eigen::Matrix3d::Zero();
    Eigen::Matrix3Xd b = Eigen::Matrix3Xd::Zero(3, l);
    for (int dy = -r; dy <= r; ++dy) {
      const int ny = y + dy;
      if (ny < y_min || ny > y_max) continue;
      for (int dx = -r; dx <= r; ++dx) {
        const int nx = x + dx;
        if (nx < x_min || nx > x_max) continue;
        const Eigen::Vector3d e(dx, dy, 1.0);
        e_gram += e * e.transpose();
        const BilinearSample s = bilinear_in_grid(coarse, nx, ny);
        const Eigen::VectorXd d = s.w00 * coarse_d.row(s.p00).transpose() +
                                  s.w10 * coarse_d.row(s.p10).transpose() +
                                  s.w01 * coarse_d.row(s.p01).transpose() +
                                  s.w11 * coarse_d.row(s.p11).transpose();
        b += e * (psi.transpose() * d).transpose();
      }
    }
    const Eigen::MatrixXd psi_gram = psi.transpose() * psi;
    if (!spd_rank_ok(e_gram) || !spd_rank_ok(psi_gram)) continue;  // RankDeficient: flag + fill

    // Normal equations factor as kron(E, G); M = E^-1 B G^-1.
    const Eigen::Matrix3Xd t = e_gram.ldlt().solve(b);
    out.transforms[p] = psi_gram.ldlt().solve(t.transpose()).transpose();
    out.flags[p] = 0;
  }

  // Fill flagged pixels from the nearest solved one (multi-source BFS, scan
  // order seeds, so the fill is deterministic).
  std::deque<int> queue;
  std::vector<int> source(full.size(), -1);
  for (int p = 0; p < full.size(); ++p)
    if (!out.flags[p]) {
      source[p] = p;
      queue.push_back(p);
    }
  if (queue.empty())
    fail(ErrorCode::RankDeficient, "interpolate_transforms: no pixel admitted a solution");
  while (!queue.empty()) {
    const int p = queue.front();
    queue.pop_front();
    const int i = p % full.cols, j = p / full.cols;
    const int neighbors[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
    for (const auto& nb : neighbors) {
      if (nb[0] < 0 || nb[0] >= full.cols || nb[1] < 0 || nb[1] >= full.rows) continue;
      const int q = full.index(nb[0], nb[1]);
      if (source[q] >= 0) continue;
      source[q] = source[p];
      out.transforms[q] = out.transforms[source[p]];
      queue.push_back(q);
    }
  }
  return out;
}

namespace {

/// Cached structure for repeated objective/gradient evaluations.
class JointObjective {
 public:
  JointObjective(const EmbeddingField& field, const FeatureNorms& fn, const PipelineConfig& cfg,
                 int tile_size)
      : field_(field), fn_(fn), cfg_(cfg), tile_(std::max(tile_size, 1)) {
    if (!field.grid.same_layout(fn.grid))
      fail(ErrorCode::DimensionMismatch, "objective: feature norms on a different grid");
    pairs_ = enumerate_neighbor_pairs(field.grid, cfg.neighborhood_radius, field.degenerate);
    incident_.resize(field.grid.size());
    for (size_t k = 0; k < pairs_.size(); ++k) {
      incident_[pairs_[k].a].push_back(static_cast<int>(k));
      incident_[pairs_[k].b].push_back(static_cast<int>(k));
    }
    active_pixels_ = 0;
    for (int p = 0; p < field.grid.size(); ++p)
      if (!field.degenerate[p]) ++active_pixels_;
    count_t_ = static_cast<double>(active_pixels_) * (field.frame_count - 1);
    count_s_ = static_cast<double>(pairs_.size()) * field.frame_count;
    projected_.resize(field.grid.size());
  }

  double count_t() const { return count_t_; }
  double count_s() const { return count_s_; }

  ObjectiveTerms evaluate(const std::vector<Eigen::Matrix3Xd>& transforms,
                          std::vector<Eigen::Matrix3Xd>* gradient) {
    const int np = field_.grid.size();
    const int n = field_.frame_count;
    const double eps2 = cfg_.epsilon * cfg_.epsilon;
    const double wt = count_t_ > 0 ? 1.0 / count_t_ : 0.0;
    const double ws = count_s_ > 0 ? cfg_.lambda / count_s_ : 0.0;

    if (gradient) {
      gradient->resize(np);
      for (int p = 0; p < np; ++p)
        (*gradient)[p] = Eigen::Matrix3Xd::Zero(3, field_.embed_dim);
    }

    // Projected coordinates P = Psi M^T (N x 3) per pixel: row i is psi_i^T.
#pragma omp parallel for schedule(static)
    for (int p = 0; p < np; ++p)
      projected_[p].noalias() = field_.coords[p] * transforms[p].transpose();

    std::vector<double> part_t(np, 0.0), part_s(np, 0.0);
    const int tiles = (np + tile_ - 1) / tile_;
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < tiles; ++t) {
      const int p_end = std::min((t + 1) * tile_, np);
      for (int p = t * tile_; p < p_end; ++p) {
        if (field_.degenerate[p]) continue;
        const Eigen::MatrixXd& psi = field_.coords[p];
        const Eigen::MatrixXd& proj = projected_[p];
        Eigen::Matrix3Xd* grad = gradient ? &(*gradient)[p] : nullptr;

        double acc_t = 0.0;
        for (int i = 0; i + 1 < n; ++i) {
          const Eigen::Vector3d v = (proj.row(i) - proj.row(i + 1)).transpose();
          const double nrm = std::sqrt(v.squaredNorm() + eps2);
          const double resid = nrm - fn_.norms(p, i);
          acc_t += resid * resid;
          if (grad) {
            const Eigen::Vector3d dv = (2.0 * wt * resid / nrm) * v;
            grad->noalias() += dv * (psi.row(i) - psi.row(i + 1));
          }
        }
        part_t[p] = acc_t;

        double acc_s = 0.0;
        for (int k : incident_[p]) {
          const NeighborPair& pr = pairs_[k];
          const Eigen::Vector3d e(pr.dx, pr.dy, 1.0);
          const Eigen::MatrixXd& pa = projected_[pr.a];
          const Eigen::MatrixXd& pb = projected_[pr.b];
          // s_i = e . psi_i(a) - height_i(b)
          Eigen::VectorXd s = pa * e - pb.col(2);
          if (pr.a == p) acc_s += s.squaredNorm();  // counted once, on the a side
          if (grad) {
            if (pr.a == p) {
              const Eigen::VectorXd coeff = (2.0 * ws) * s;
              grad->noalias() += e * (field_.coords[pr.a].transpose() * coeff).transpose();
            } else {
              const Eigen::VectorXd coeff = (2.0 * ws) * s;
              grad->row(2).noalias() -= (field_.coords[pr.b].transpose() * coeff).transpose();
            }
          }
        }
        part_s[p] = acc_s;
      }
    }

    ObjectiveTerms terms;
    double sum_t = 0.0, sum_s = 0.0;
    for (int p = 0; p < np; ++p) {  // fixed-order reduction
      sum_t += part_t[p];
      sum_s += part_s[p];
    }
    terms.temporal = count_t_ > 0 ? sum_t / count_t_ : 0.0;
    terms.spatial = count_s_ > 0 ? sum_s / count_s_ : 0.0;
    terms.total = terms.temporal + cfg_.lambda * terms.spatial;
    return terms;
  }

 private:
  const EmbeddingField& field_;
  const FeatureNorms& fn_;
  const PipelineConfig& cfg_;
  int tile_;
  std::vector<NeighborPair> pairs_;
  std::vector<std::vector<int>> incident_;
  std::vector<Eigen::MatrixXd> projected_;
  int active_pixels_ = 0;
  double count_t_ = 0.0, count_s_ = 0.0;
};

void flatten(const std::vector<Eigen::Matrix3Xd>& mats, Eigen::VectorXd& x) {
  long off = 0;
  for (const auto& m : mats) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < m.cols(); ++c) x[off++] = m(r, c);
  }
}

void unflatten(const Eigen::VectorXd& x, std::vector<Eigen::Matrix3Xd>& mats) {
  long off = 0;
  for (auto& m : mats) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < m.cols(); ++c) m(r, c) = x[off++];
  }
}

}  // namespace

ObjectiveTerms evaluate_objective(const TransformField& tf, const EmbeddingField& field,
                                  const FeatureNorms& fn, const PipelineConfig& cfg,
                                  std::vector<Eigen::Matrix3Xd>* gradient, int tile_size) {
  if (!tf.grid.same_layout(field.grid))
    fail(ErrorCode::DimensionMismatch, "objective: transform grid mismatch");
  JointObjective obj(field, fn, cfg, tile_size);
  return obj.evaluate(tf.transforms, gradient);
}

OptimizeStats optimize(TransformField& tf, const EmbeddingField& field, const FeatureNorms& fn,
                       const PipelineConfig& cfg) {
  if (!tf.grid.same_layout(field.grid))
    fail(ErrorCode::DimensionMismatch, "optimize: transform grid mismatch");

  // Work in feature-normalized units: transforms and target norms are divided
  // by the mean feature norm, and the initial transforms are rescaled onto the
  // temporal-term-matched magnitude. Scaling every input intensity by a
  // constant then changes nothing the optimizer sees, so the recovered
  // displacement scales exactly with the features. Objective values in the
  // returned stats are in these normalized units.
  double unit = fn.norms.size() > 0 ? fn.norms.mean() : 1.0;
  if (!(unit > 0.0)) unit = 1.0;
  FeatureNorms fn_scaled = fn;
  fn_scaled.norms /= unit;

  JointObjective obj(field, fn_scaled, cfg, 256);

  const long dim = static_cast<long>(tf.grid.size()) * 3 * tf.embed_dim;
  Eigen::VectorXd x(dim), g(dim);
  flatten(tf.transforms, x);
  x /= unit;

  // Closed-form least-squares gain aligning ||M dPsi|| with the normalized
  // feature norms; applied only through the optimizer's starting point.
  {
    double num = 0.0, den = 0.0;
    std::vector<Eigen::Matrix3Xd> scaled = tf.transforms;
    unflatten(x, scaled);
    for (int p = 0; p < field.grid.size(); ++p) {
      if (field.degenerate[p]) continue;
      const Eigen::MatrixXd proj = field.coords[p] * scaled[p].transpose();
      for (int i = 0; i + 1 < field.frame_count; ++i) {
        const double vn = (proj.row(i) - proj.row(i + 1)).norm();
        num += fn_scaled.norms(p, i) * vn;
        den += vn * vn;
      }
    }
    if (den > 0.0 && num > 0.0) x *= num / den;
  }

  std::vector<Eigen::Matrix3Xd> work = tf.transforms;
  std::vector<Eigen::Matrix3Xd> grad_mats;
  auto eval = [&](const Eigen::VectorXd& xv, Eigen::VectorXd* gv) -> double {
    unflatten(xv, work);
    ObjectiveTerms terms = obj.evaluate(work, gv ? &grad_mats : nullptr);
    if (gv) flatten(grad_mats, *gv);
    return terms.total;
  };

  OptimizeStats stats;
  double f = eval(x, &g);
  stats.initial_objective = f;
  stats.history.push_back(f);

  const int mem = 8;
  std::deque<Eigen::VectorXd> s_list, y_list;
  std::deque<double> rho_list;

  Eigen::VectorXd x_new(dim), g_new(dim);
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    if (g.norm() <= 1e-12 * std::max(1.0, std::abs(f))) {
      stats.converged = true;
      break;
    }

    // Two-loop recursion.
    Eigen::VectorXd dir = -g;
    std::vector<double> alpha(s_list.size());
    for (int k = static_cast<int>(s_list.size()) - 1; k >= 0; --k) {
      alpha[k] = rho_list[k] * s_list[k].dot(dir);
      dir -= alpha[k] * y_list[k];
    }
    if (!s_list.empty()) {
      const double gamma =
          s_list.back().dot(y_list.back()) / y_list.back().squaredNorm();
      dir *= gamma;
    }
    for (size_t k = 0; k < s_list.size(); ++k) {
      const double beta = rho_list[k] * y_list[k].dot(dir);
      dir += (alpha[k] - beta) * s_list[k];
    }
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      dir = -g;
      slope = g.dot(dir);
    }

    double step = s_list.empty() ? std::min(1.0, 1.0 / std::max(1.0, g.norm())) : 1.0;
    bool accepted = false;
    double f_new = f;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + step * dir;
      f_new = eval(x_new, nullptr);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // line search stalled; keep the best iterate

    eval(x_new, &g_new);
    Eigen::VectorXd s_vec = x_new - x;
    Eigen::VectorXd y_vec = g_new - g;
    const double sy = s_vec.dot(y_vec);
    if (sy > 1e-12 * s_vec.norm() * y_vec.norm()) {
      s_list.push_back(std::move(s_vec));
      y_list.push_back(std::move(y_vec));
      rho_list.push_back(1.0 / sy);
      if (static_cast<int>(s_list.size()) > mem) {
        s_list.pop_front();
        y_list.pop_front();
        rho_list.pop_front();
      }
    }

    x = x_new;
    g = g_new;
    stats.iterations = iter + 1;
    stats.history.push_back(f_new);
    const double decrease = (f - f_new) / std::max(std::abs(f), 1e-300);
    f = f_new;
    if (decrease < cfg.tol) {
      stats.converged = true;
      break;
    }
  }

  x *= unit;
  unflatten(x, tf.transforms);
  stats.final_objective = f;
  return stats;
}

DisplacementMaps extract_displacement(const PlaneParams& pp, const std::vector<uint8_t>* flags) {
  DisplacementMaps out;
  out.grid = pp.grid;
  const int n = pp.frame_count();
  out.maps.assign(n, Image(pp.grid.cols, pp.grid.rows));
  out.mask = Image(pp.grid.cols, pp.grid.rows, 1.0f);
  for (int p = 0; p < pp.grid.size(); ++p) {
    const int i = p % pp.grid.cols, j = p / pp.grid.cols;
    if (flags && (*flags)[p]) out.mask.at(i, j) = 0.0f;
    for (int f = 0; f < n; ++f) out.maps[f].at(i, j) = static_cast<float>(pp.psi[p](2, f));
  }
  return out;
}

}  // namespace speckle
