#pragma once

// Shared test utilities: independent oracles, statistics helpers, fixtures.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "speckle/embedding.hpp"
#include "speckle/rng.hpp"
#include "speckle/types.hpp"

namespace testsup {

/// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("speckle_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& rel = "") const { return (path_ / rel).string(); }

 private:
  std::filesystem::path path_;
};

inline std::mt19937_64 seeded_rng(uint64_t seed) { return std::mt19937_64(seed); }

inline Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

/// Distance matrix of random points in R^dim (symmetric, zero diagonal, and
/// generically a simple kernel spectrum).
inline Eigen::MatrixXd random_distance_matrix(int n, int dim, std::mt19937_64& rng) {
  const Eigen::MatrixXd pts = random_matrix(n, dim, rng);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (pts.row(i) - pts.row(j)).norm();
  return d;
}

/// Max |a - b| after choosing the better sign per column.
inline double sign_aligned_max_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return 1e300;
  double worst = 0.0;
  for (int c = 0; c < a.cols(); ++c) {
    const double plus = (a.col(c) - b.col(c)).cwiseAbs().maxCoeff();
    const double minus = (a.col(c) + b.col(c)).cwiseAbs().maxCoeff();
    worst = std::max(worst, std::min(plus, minus));
  }
  return worst;
}

inline double sign_aligned_max_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double plus = (a - b).cwiseAbs().maxCoeff();
  const double minus = (a + b).cwiseAbs().maxCoeff();
  return std::min(plus, minus);
}

/// Spearman rank correlation.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t x, size_t y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    for (size_t k = 0; k < idx.size(); ++k) r[idx[k]] = static_cast<double>(k);
    return r;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

/// Kolmogorov-Smirnov statistic against an exponential fit (rate = 1/mean).
inline double ks_exponential(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(samples.size());
  const double rate = 1.0 / mean;
  double d = 0.0;
  const double n = static_cast<double>(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    const double cdf = 1.0 - std::exp(-rate * samples[i]);
    d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - cdf));
  }
  return d;
}

/// Random embedding field over a cols x rows grid (no degenerate pixels).
inline speckle::EmbeddingField random_field(int cols, int rows, int frames, int l, uint64_t seed,
                                            int stride = 1, double scale = 1.0) {
  speckle::EmbeddingField field;
  field.grid.x0 = 5;
  field.grid.y0 = 5;
  field.grid.stride = stride;
  field.grid.cols = cols;
  field.grid.rows = rows;
  field.frame_count = frames;
  field.embed_dim = l;
  field.coords.resize(field.grid.size());
  field.degenerate.assign(field.grid.size(), 0);
  std::mt19937_64 rng(seed);
  for (auto& c : field.coords) c = random_matrix(frames, l, rng, scale);
  return field;
}

}  // namespace testsup
