// Benchmark: serial reference implementations vs the OpenMP kernels.
//
// Usage: speckle_bench [grid_side] [frames]

#include <Eigen/Core>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "speckle/consistency.hpp"
#include "speckle/embedding.hpp"
#include "speckle/features.hpp"
#include "speckle/parallel.hpp"
#include "speckle/pipeline.hpp"
#include "speckle/reference.hpp"
#include "speckle/refine.hpp"
#include "speckle/simulator.hpp"

using namespace speckle;

namespace {

template <typename F>
double time_s(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(const char* name, double serial, double parallel) {
  std::printf("%-24s %10.3f s %10.3f s %8.2fx\n", name, serial, parallel,
              parallel > 0 ? serial / parallel : 0.0);
}

}  // namespace

int main(int argc, char** argv) {
  Eigen::setNbThreads(1);
  const int side = argc > 1 ? std::atoi(argv[1]) : 24;
  const int frames = argc > 2 ? std::atoi(argv[2]) : 64;

  PipelineConfig cfg;
  cfg.subsample_stride = 1;

  Scenario sc = make_scenario("sine60", {{"frames", std::to_string(frames)},
                                         {"width", std::to_string(side + cfg.patch_size - 1)},
                                         {"height", std::to_string(side + cfg.patch_size - 1)}});
  std::printf("scene %dx%d, %d frames, %d threads\n", sc.scene.width, sc.scene.height, frames,
              effective_threads(0));
  const SimulationResult sim = render_sequence(sc.scene, sc.motion, sc.frames, sc.frame_rate);
  const PixelGrid grid = make_grid(valid_domain(sc.scene.width, sc.scene.height, cfg.patch_size), 1);
  std::printf("grid %dx%d (%d pixels)\n\n", grid.cols, grid.rows, grid.size());
  std::printf("%-24s %12s %12s %9s\n", "kernel", "serial", "openmp", "speedup");

  EmbeddingField field_par;
  {
    EmbeddingField field_ser;
    const double ts = time_s([&] { field_ser = ref::embed_all(sim.frames, cfg, grid); });
    const double tp = time_s([&] { field_par = embed_all(sim.frames, cfg, grid); });
    report("embed_all", ts, tp);
  }
  field_par = normalize_temporal_std(field_par, cfg.epsilon);

  {
    // naive elementwise loops, serial vs Gram factorization under OpenMP
    double ts = time_s([&] {
      for (int p = 0; p < grid.size(); ++p) {
        const FeatureSeries fs =
            extract_features(sim.frames, grid.x_at(p % grid.cols), grid.y_at(p / grid.cols),
                             cfg.patch_size);
        ref::pairwise_distance_matrix(fs);
      }
    });
    double tp = time_s([&] {
#pragma omp parallel for schedule(dynamic, 8)
      for (int p = 0; p < grid.size(); ++p) {
        const FeatureSeries fs =
            extract_features(sim.frames, grid.x_at(p % grid.cols), grid.y_at(p / grid.cols),
                             cfg.patch_size);
        pairwise_distance_matrix(fs);
      }
    });
    report("pairwise distances", ts, tp);
  }

  FeatureNorms fn;
  {
    const double tp = time_s([&] { fn = compute_feature_norms(sim.frames, grid, cfg.patch_size); });
    std::printf("%-24s %12s %10.3f s\n", "feature_norms", "-", tp);
  }

  ConsistencySystem system(field_par, cfg.neighborhood_radius);
  {
    Eigen::SparseMatrix<double> h;
    const double tp = time_s([&] { h = system.normal_matrix(); });
    std::printf("%-24s %12s %10.3f s  (nnz %ld)\n", "normal_matrix", "-", tp,
                static_cast<long>(h.nonZeros()));
  }

  TransformField tf = solve_smallest_eigenvector(system);
  {
    std::vector<Eigen::Matrix3Xd> grad_ser, grad_par;
    ObjectiveTerms a, b;
    const double ts =
        time_s([&] { a = ref::objective_and_gradient(tf, field_par, fn, cfg, &grad_ser); });
    const double tp = time_s([&] { b = evaluate_objective(tf, field_par, fn, cfg, &grad_par); });
    report("objective+gradient", ts, tp);
    std::printf("\nobjective serial %.12e vs parallel %.12e\n", a.total, b.total);
  }
  return 0;
}
