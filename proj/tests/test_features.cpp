#include <doctest.h>

#include <random>

#include "speckle/features.hpp"
#include "speckle/reference.hpp"
#include "support.hpp"

using namespace speckle;

namespace {

FrameSequence random_sequence(int n, int w, int h, uint64_t seed) {
  FrameSequence seq;
  seq.frame_rate = 1000.0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int i = 0; i < n; ++i) {
    Image img(w, h);
    for (auto& v : img.data) v = u(rng);
    seq.frames.push_back(std::move(img));
  }
  return seq;
}

}  // namespace

TEST_CASE("patch 11 gives 121-dimensional features") {
  const FrameSequence seq = random_sequence(3, 32, 32, 1);
  const FeatureSeries fs = extract_features(seq, 16, 16, 11);
  CHECK(fs.dim() == 121);
  CHECK(fs.frame_count() == 3);
}

TEST_CASE("constant frames give constant feature vectors") {
  FrameSequence seq;
  seq.frames.assign(2, Image(16, 16, 0.37f));
  const FeatureSeries fs = extract_features(seq, 8, 8, 5);
  for (int i = 0; i < fs.frame_count(); ++i)
    for (int c = 0; c < fs.dim(); ++c) CHECK(fs.vectors(i, c) == 0.37f);
}

TEST_CASE("margin violation raises PatchOutOfBounds") {
  const FrameSequence seq = random_sequence(2, 512, 512, 2);
  try {
    extract_features(seq, 2, 2, 11);
    FAIL("expected PatchOutOfBounds");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PatchOutOfBounds);
  }
}

TEST_CASE("extract_features is translation consistent") {
  const FrameSequence seq = random_sequence(2, 40, 40, 3);
  FrameSequence shifted;
  shifted.frame_rate = seq.frame_rate;
  const int sx = 4, sy = 7;
  for (const auto& f : seq.frames) {
    Image img(40, 40, 0.0f);
    for (int y = 0; y + sy < 40; ++y)
      for (int x = 0; x + sx < 40; ++x) img.at(x + sx, y + sy) = f.at(x, y);
    shifted.frames.push_back(std::move(img));
  }
  const FeatureSeries a = extract_features(seq, 12, 10, 7);
  const FeatureSeries b = extract_features(shifted, 12 + sx, 10 + sy, 7);
  CHECK((a.vectors - b.vectors).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("feature_distance basics: identity, 3-4-5, dimension mismatch") {
  std::vector<float> a(121, 0.0f), b(121, 0.0f);
  CHECK(feature_distance(a, a) == 0.0);
  b[10] = 3.0f;
  b[100] = 4.0f;
  CHECK(feature_distance(a, b) == doctest::Approx(5.0).epsilon(1e-12));
  std::vector<float> c(120, 0.0f);
  CHECK_THROWS_AS(feature_distance(a, c), Error);
}

TEST_CASE("feature_distance matches elementwise-sum oracle on random 121-dim pairs") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<float> a(121), b(121);
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
    double acc = 0.0;  // independent direct summation
    for (int i = 0; i < 121; ++i)
      acc += (double(a[i]) - double(b[i])) * (double(a[i]) - double(b[i]));
    const double want = std::sqrt(acc);
    CHECK(feature_distance(a, b) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("pairwise matrix of identical rows is zero") {
  FrameSequence seq;
  seq.frames.assign(5, Image(12, 12, 0.9f));
  const FeatureSeries fs = extract_features(seq, 6, 6, 5);
  const Eigen::MatrixXd d = pairwise_distance_matrix(fs);
  CHECK(d.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pairwise matrix consistent with three direct calls at N=3") {
  const FrameSequence seq = random_sequence(3, 20, 20, 4);
  const FeatureSeries fs = extract_features(seq, 10, 10, 9);
  const Eigen::MatrixXd d = pairwise_distance_matrix(fs);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      std::vector<float> a(fs.vectors.row(i).begin(), fs.vectors.row(i).end());
      std::vector<float> b(fs.vectors.row(j).begin(), fs.vectors.row(j).end());
      CHECK(d(i, j) == doctest::Approx(feature_distance(a, b)).epsilon(1e-10));
    }
  }
}

TEST_CASE("pairwise matrix equals the brute-force double-loop oracle at N=64") {
  const FrameSequence seq = random_sequence(64, 24, 24, 5);
  const FeatureSeries fs = extract_features(seq, 12, 12, 11);
  const Eigen::MatrixXd fast = pairwise_distance_matrix(fs);
  const Eigen::MatrixXd slow = ref::pairwise_distance_matrix(fs);
  CHECK((fast - slow).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, slow.maxCoeff()));
}

TEST_CASE("pairwise matrix invariants: symmetry, zero diagonal, triangle inequality") {
  const FrameSequence seq = random_sequence(24, 24, 24, 6);
  const FeatureSeries fs = extract_features(seq, 12, 12, 7);
  const Eigen::MatrixXd d = pairwise_distance_matrix(fs);
  CHECK((d - d.transpose()).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < d.rows(); ++i) CHECK(d(i, i) == 0.0);
  CHECK(d.minCoeff() >= 0.0);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(d.rows()) - 1);
  for (int rep = 0; rep < 200; ++rep) {
    const int i = pick(rng), j = pick(rng), k = pick(rng);
    CHECK(d(i, j) <= d(i, k) + d(k, j) + 1e-9);
  }
}

TEST_CASE("compute_feature_norms matches per-pixel direct distances") {
  const FrameSequence seq = random_sequence(6, 30, 30, 8);
  const PixelGrid grid = make_grid(valid_domain(30, 30, 7), 4);
  const FeatureNorms fn = compute_feature_norms(seq, grid, 7);
  for (int p = 0; p < grid.size(); ++p) {
    const FeatureSeries fs =
        extract_features(seq, grid.x_at(p % grid.cols), grid.y_at(p / grid.cols), 7);
    for (int i = 0; i + 1 < 6; ++i) {
      std::vector<float> a(fs.vectors.row(i).begin(), fs.vectors.row(i).end());
      std::vector<float> b(fs.vectors.row(i + 1).begin(), fs.vectors.row(i + 1).end());
      CHECK(fn.norms(p, i) == doctest::Approx(feature_distance(a, b)).epsilon(1e-12));
    }
  }
}
