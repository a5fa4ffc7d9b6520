#include <doctest.h>

#include <random>

#include "speckle/refine.hpp"
#include "speckle/reference.hpp"
#include "support.hpp"

using namespace speckle;

namespace {

FeatureNorms norms_for(const PixelGrid& grid, const Eigen::MatrixXd& values) {
  FeatureNorms fn;
  fn.grid = grid;
  fn.patch_size = 11;
  fn.norms = values;
  return fn;
}

PlaneParams random_plane_params(const PixelGrid& grid, int n, uint64_t seed) {
  PlaneParams pp;
  pp.grid = grid;
  std::mt19937_64 rng(seed);
  pp.psi.resize(grid.size());
  for (auto& m : pp.psi) m = testsup::random_matrix(3, n, rng);
  return pp;
}

TransformField random_tf(const PixelGrid& grid, int l, uint64_t seed) {
  TransformField tf;
  tf.grid = grid;
  tf.embed_dim = l;
  tf.flags.assign(grid.size(), 0);
  std::mt19937_64 rng(seed);
  tf.transforms.resize(grid.size());
  for (auto& m : tf.transforms) m = testsup::random_matrix(3, l, rng);
  return tf;
}

double central_fd_relative_error(const TransformField& tf0, const EmbeddingField& field,
                                 const FeatureNorms& fn, const PipelineConfig& cfg) {
  std::vector<Eigen::Matrix3Xd> grad;
  evaluate_objective(tf0, field, fn, cfg, &grad);

  double num = 0.0, den = 0.0;
  TransformField tf = tf0;
  for (int p = 0; p < tf.grid.size(); ++p) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < tf.embed_dim; ++c) {
        const double v0 = tf.transforms[p](r, c);
        const double h = 1e-6 * std::max(1.0, std::abs(v0));
        tf.transforms[p](r, c) = v0 + h;
        const double fp = evaluate_objective(tf, field, fn, cfg).total;
        tf.transforms[p](r, c) = v0 - h;
        const double fm = evaluate_objective(tf, field, fn, cfg).total;
        tf.transforms[p](r, c) = v0;
        const double fd = (fp - fm) / (2.0 * h);
        num += (grad[p](r, c) - fd) * (grad[p](r, c) - fd);
        den += fd * fd;
      }
    }
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace

TEST_CASE("init_scale: matched magnitudes leave psi nearly unchanged") {
  const PixelGrid grid{5, 5, 1, 2, 1};
  PlaneParams pp = random_plane_params(grid, 6, 41);
  Eigen::MatrixXd norms(2, 5);
  for (int p = 0; p < 2; ++p)
    for (int i = 0; i < 5; ++i) norms(p, i) = (pp.psi[p].col(i) - pp.psi[p].col(i + 1)).norm();
  const FeatureNorms fn = norms_for(grid, norms);
  const PlaneParams out = init_scale(pp, fn, 1e-8);
  for (int p = 0; p < 2; ++p)
    CHECK((out.psi[p] - pp.psi[p]).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("init_scale: a static zero pixel stays zero") {
  const PixelGrid grid{5, 5, 1, 1, 1};
  PlaneParams pp;
  pp.grid = grid;
  pp.psi = {Eigen::Matrix3Xd::Zero(3, 4)};
  const FeatureNorms fn = norms_for(grid, Eigen::MatrixXd::Zero(1, 3));
  const PlaneParams out = init_scale(pp, fn, 1e-8);
  CHECK(out.psi[0].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("init_scale: rescaled magnitude matches the recomputation oracle") {
  const PixelGrid grid{5, 5, 1, 3, 2};
  const int n = 7;
  PlaneParams pp = random_plane_params(grid, n, 42);
  std::mt19937_64 rng(43);
  Eigen::MatrixXd norms = testsup::random_matrix(grid.size(), n - 1, rng).cwiseAbs();
  const FeatureNorms fn = norms_for(grid, norms);
  const double eps = 1e-8;
  const PlaneParams out = init_scale(pp, fn, eps);

  for (int p = 0; p < grid.size(); ++p) {
    double m_psi = 0.0, m_f = 0.0;
    for (int i = 0; i + 1 < n; ++i) {
      m_psi += (pp.psi[p].col(i) - pp.psi[p].col(i + 1)).squaredNorm();
      m_f += norms(p, i) * norms(p, i);
    }
    m_psi /= n;
    m_f /= n;
    double m_psi_after = 0.0;
    for (int i = 0; i + 1 < n; ++i)
      m_psi_after += (out.psi[p].col(i) - out.psi[p].col(i + 1)).squaredNorm();
    m_psi_after /= n;
    const double factor = m_f / (m_psi + eps);
    CHECK(m_psi_after ==
          doctest::Approx(factor * factor * m_psi).epsilon(1e-10));
  }
}

TEST_CASE("interpolate_transforms: zero coarse field maps heights to zero") {
  const PixelGrid coarse{5, 5, 4, 3, 3};
  PlaneParams pp_coarse;
  pp_coarse.grid = coarse;
  pp_coarse.psi.assign(coarse.size(), Eigen::Matrix3Xd::Zero(3, 6));
  TransformField tf_coarse = random_tf(coarse, 3, 44);

  EmbeddingField full = testsup::random_field(9, 9, 6, 3, 45);
  const TransformField out = interpolate_transforms(tf_coarse, full, pp_coarse, 5);
  for (int p = 0; p < full.grid.size(); ++p) {
    for (int i = 0; i < 6; ++i) {
      const Eigen::Vector3d psi = out.transforms[p] * full.coords[p].row(i).transpose();
      CHECK(std::abs(psi[2]) <= 1e-8);
    }
  }
}

TEST_CASE("interpolate_transforms: exact affine instance is reproduced") {
  // d_i(x,y) = a_i x + b_i y + c_i; bilinear interpolation of an affine field
  // is exact, and compatible embeddings make the per-pixel system consistent.
  std::mt19937_64 rng(46);
  const int n = 6, l = 3;
  const Eigen::MatrixXd plane = testsup::random_matrix(n, 3, rng);

  const PixelGrid coarse{3, 3, 4, 4, 4};
  PlaneParams pp_coarse;
  pp_coarse.grid = coarse;
  pp_coarse.psi.resize(coarse.size());
  for (int p = 0; p < coarse.size(); ++p) {
    const double x = coarse.x_at(p % coarse.cols), y = coarse.y_at(p / coarse.cols);
    pp_coarse.psi[p].resize(3, n);
    for (int i = 0; i < n; ++i)
      pp_coarse.psi[p].col(i) =
          Eigen::Vector3d(plane(i, 0), plane(i, 1), plane(i, 0) * x + plane(i, 1) * y + plane(i, 2));
  }
  TransformField tf_coarse = random_tf(coarse, l, 47);  // unused by the solve itself

  EmbeddingField full = testsup::random_field(13, 13, n, l, 48);
  full.grid = PixelGrid{3, 3, 1, 13, 13};
  std::vector<Eigen::Matrix3d> bases(full.grid.size());
  for (int p = 0; p < full.grid.size(); ++p) {
    Eigen::Matrix3d basis;
    do {
      basis = testsup::random_matrix(3, 3, rng);
    } while (std::abs(basis.determinant()) < 0.1);
    bases[p] = basis;
    for (int i = 0; i < n; ++i)
      full.coords[p].row(i) = (basis.inverse() * Eigen::Vector3d(plane(i, 0), plane(i, 1),
                                                                 plane(i, 2)))
                                  .transpose();
  }

  const int patch = 5;
  const TransformField out = interpolate_transforms(tf_coarse, full, pp_coarse, patch);
  const int r = patch / 2;
  for (int p = 0; p < full.grid.size(); ++p) {
    const int x = full.grid.x_at(p % full.grid.cols);
    const int y = full.grid.y_at(p / full.grid.cols);
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d psi = out.transforms[p] * full.coords[p].row(i).transpose();
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 3 || ny < 3 || nx > full.grid.x_at(12) || ny > full.grid.y_at(12)) continue;
          const double want = plane(i, 0) * nx + plane(i, 1) * ny + plane(i, 2);
          const double got = dx * psi[0] + dy * psi[1] + psi[2];
          CHECK(std::abs(got - want) <= 1e-8);
        }
    }
  }
}

TEST_CASE("interpolate_transforms: single pixel matches the dense normal-equations oracle") {
  std::mt19937_64 rng(49);
  const int n = 256, l = 5, patch = 11;

  const PixelGrid coarse{5, 5, 12, 2, 2};
  PlaneParams pp_coarse = random_plane_params(coarse, n, 50);
  TransformField tf_coarse = random_tf(coarse, l, 51);

  // Full domain covering the coarse grid; probe the center pixel.
  EmbeddingField full = testsup::random_field(13, 13, n, l, 52);
  full.grid = PixelGrid{5, 5, 1, 13, 13};
  const TransformField out = interpolate_transforms(tf_coarse, full, pp_coarse, patch);

  const int px = 11, py = 11;  // image coords; grid index (6, 6)
  const int p = full.grid.index(6, 6);
  REQUIRE(full.grid.x_at(6) == px);

  // Dense oracle: rows kron over (neighbor, frame), solved via QR.
  Eigen::MatrixXd coarse_d(coarse.size(), n);
  for (int q = 0; q < coarse.size(); ++q) coarse_d.row(q) = pp_coarse.psi[q].row(2);
  auto coarse_bilinear = [&](double x, double y, int frame) {
    const double gx = std::clamp((x - coarse.x0) / coarse.stride, 0.0, 1.0);
    const double gy = std::clamp((y - coarse.y0) / coarse.stride, 0.0, 1.0);
    const int i0 = 0, j0 = 0;
    const double fx = gx - i0, fy = gy - j0;
    return (1 - fx) * (1 - fy) * coarse_d(coarse.index(0, 0), frame) +
           fx * (1 - fy) * coarse_d(coarse.index(1, 0), frame) +
           (1 - fx) * fy * coarse_d(coarse.index(0, 1), frame) +
           fx * fy * coarse_d(coarse.index(1, 1), frame);
  };

  const int r = patch / 2;
  std::vector<Eigen::Vector3d> es;
  std::vector<double> ds;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const int nx = px + dx, ny = py + dy;
      if (nx < 5 || ny < 5 || nx > full.grid.x_at(12) || ny > full.grid.y_at(12)) continue;
      es.emplace_back(dx, dy, 1.0);
      for (int i = 0; i < n; ++i) ds.push_back(coarse_bilinear(nx, ny, i));
    }
  const long rows = static_cast<long>(es.size()) * n;
  REQUIRE(rows == 121L * 256L);
  Eigen::MatrixXd a(rows, 3 * l);
  Eigen::VectorXd rhs(rows);
  long row = 0;
  for (size_t ni = 0; ni < es.size(); ++ni) {
    for (int i = 0; i < n; ++i, ++row) {
      for (int c = 0; c < 3; ++c)
        for (int d = 0; d < l; ++d) a(row, c * l + d) = es[ni][c] * full.coords[p](i, d);
      rhs[row] = ds[row];
    }
  }
  const Eigen::VectorXd u = a.colPivHouseholderQr().solve(rhs);
  Eigen::Matrix3Xd oracle(3, l);
  for (int c = 0; c < 3; ++c)
    for (int d = 0; d < l; ++d) oracle(c, d) = u[c * l + d];

  CHECK((out.transforms[p] - oracle).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("objective: lambda=0 with a distance-preserving single pixel is at the minimum") {
  const PixelGrid grid{5, 5, 1, 1, 1};
  EmbeddingField field = testsup::random_field(1, 1, 8, 3, 53);
  TransformField tf = random_tf(grid, 3, 54);

  Eigen::MatrixXd norms(1, 7);
  for (int i = 0; i < 7; ++i)
    norms(0, i) =
        (tf.transforms[0] * (field.coords[0].row(i) - field.coords[0].row(i + 1)).transpose())
            .norm();
  const FeatureNorms fn = norms_for(grid, norms);

  PipelineConfig cfg;
  cfg.lambda = 0.0;
  const double f0 = evaluate_objective(tf, field, fn, cfg).total;
  CHECK(f0 <= 1e-20);

  TransformField tf_opt = tf;
  const OptimizeStats stats = optimize(tf_opt, field, fn, cfg);
  CHECK(stats.final_objective <= 1e-20);
  for (int p = 0; p < grid.size(); ++p)
    CHECK((tf_opt.transforms[p] - tf.transforms[p]).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("objective history is non-increasing on a random instance") {
  const PixelGrid grid{5, 5, 1, 3, 3};
  EmbeddingField field = testsup::random_field(3, 3, 6, 2, 55);
  TransformField tf = random_tf(grid, 2, 56);
  std::mt19937_64 rng(57);
  const FeatureNorms fn = norms_for(grid, testsup::random_matrix(9, 5, rng).cwiseAbs());

  PipelineConfig cfg;
  cfg.max_iters = 60;
  const OptimizeStats stats = optimize(tf, field, fn, cfg);
  REQUIRE(stats.history.size() >= 2);
  for (size_t i = 0; i + 1 < stats.history.size(); ++i)
    CHECK(stats.history[i + 1] <= stats.history[i]);
  CHECK(stats.final_objective <= stats.initial_objective);
}

TEST_CASE("analytic gradient matches central finite differences") {
  std::mt19937_64 seeds(58);
  for (int rep = 0; rep < 5; ++rep) {
    const int cols = 1 + static_cast<int>(seeds() % 2);
    const int rows = 1 + static_cast<int>(seeds() % 2);
    const int n = 4 + static_cast<int>(seeds() % 3);
    const int l = 1 + static_cast<int>(seeds() % 3);
    EmbeddingField field = testsup::random_field(cols, rows, n, l, seeds());
    TransformField tf = random_tf(field.grid, l, seeds());
    std::mt19937_64 rng(seeds());
    const FeatureNorms fn =
        norms_for(field.grid, testsup::random_matrix(field.grid.size(), n - 1, rng).cwiseAbs());
    PipelineConfig cfg;
    cfg.lambda = 0.7;
    CHECK(central_fd_relative_error(tf, field, fn, cfg) <= 1e-4);
  }
}

TEST_CASE("temporal term is invariant under per-pixel orthogonal transforms") {
  const PixelGrid grid{5, 5, 1, 2, 2};
  EmbeddingField field = testsup::random_field(2, 2, 6, 3, 59);
  TransformField tf = random_tf(grid, 3, 60);
  std::mt19937_64 rng(61);
  const FeatureNorms fn = norms_for(grid, testsup::random_matrix(4, 5, rng).cwiseAbs());
  PipelineConfig cfg;
  cfg.lambda = 0.0;  // isolate the temporal term

  const double before = evaluate_objective(tf, field, fn, cfg).total;
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& m : tf.transforms) {
    const Eigen::Vector3d axis = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
    const Eigen::Matrix3d q = Eigen::AngleAxisd(g(rng), axis).toRotationMatrix();
    m = q * m;
  }
  const double after = evaluate_objective(tf, field, fn, cfg).total;
  CHECK(after == doctest::Approx(before).epsilon(1e-10));
}

TEST_CASE("tiled evaluation is identical for any tile size and matches the serial reference") {
  EmbeddingField field = testsup::random_field(4, 3, 7, 2, 62);
  field.degenerate[5] = 1;  // exercise the skip path
  field.coords[5].setZero();
  TransformField tf = random_tf(field.grid, 2, 63);
  std::mt19937_64 rng(64);
  const FeatureNorms fn = norms_for(field.grid, testsup::random_matrix(12, 6, rng).cwiseAbs());
  PipelineConfig cfg;

  std::vector<Eigen::Matrix3Xd> g1, g7, gall, gref;
  const ObjectiveTerms t1 = evaluate_objective(tf, field, fn, cfg, &g1, 1);
  const ObjectiveTerms t7 = evaluate_objective(tf, field, fn, cfg, &g7, 7);
  const ObjectiveTerms tall = evaluate_objective(tf, field, fn, cfg, &gall, 1 << 28);
  CHECK(t1.total == t7.total);
  CHECK(t1.total == tall.total);
  for (int p = 0; p < field.grid.size(); ++p) {
    CHECK((g1[p] - g7[p]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((g1[p] - gall[p]).cwiseAbs().maxCoeff() == 0.0);
  }

  const ObjectiveTerms tref = ref::objective_and_gradient(tf, field, fn, cfg, &gref);
  CHECK(t1.total == doctest::Approx(tref.total).epsilon(1e-12));
  for (int p = 0; p < field.grid.size(); ++p)
    CHECK((g1[p] - gref[p]).cwiseAbs().maxCoeff() <=
          1e-10 * std::max(1.0, gref[p].cwiseAbs().maxCoeff()));
}

TEST_CASE("extract_displacement: forced heights and random indexing oracle") {
  const PixelGrid grid{5, 5, 1, 3, 2};
  const int n = 5;

  SUBCASE("zero third component gives zero maps") {
    PlaneParams pp = random_plane_params(grid, n, 65);
    for (auto& psi : pp.psi) psi.row(2).setZero();
    const DisplacementMaps maps = extract_displacement(pp);
    for (const auto& m : maps.maps) CHECK(m.data == std::vector<float>(6, 0.0f));
  }

  SUBCASE("sine heights reproduce the sine sequence") {
    PlaneParams pp = random_plane_params(grid, n, 66);
    for (int p = 0; p < grid.size(); ++p)
      for (int i = 0; i < n; ++i)
        pp.psi[p](2, i) = std::sin(2.0 * std::numbers::pi * 60.0 * i / 1000.0);
    const DisplacementMaps maps = extract_displacement(pp);
    for (int i = 0; i < n; ++i)
      for (float v : maps.maps[i].data)
        CHECK(v == doctest::Approx(std::sin(2.0 * std::numbers::pi * 60.0 * i / 1000.0))
                       .epsilon(1e-6));
  }

  SUBCASE("random params match direct component extraction; flags mask pixels") {
    PlaneParams pp = random_plane_params(grid, n, 67);
    std::vector<uint8_t> flags(grid.size(), 0);
    flags[3] = 1;
    const DisplacementMaps maps = extract_displacement(pp, &flags);
    for (int p = 0; p < grid.size(); ++p)
      for (int i = 0; i < n; ++i)
        CHECK(maps.maps[i].data[p] == static_cast<float>(pp.psi[p](2, i)));
    CHECK(maps.mask.data[3] == 0.0f);
    CHECK(maps.mask.data[0] == 1.0f);
  }
}
