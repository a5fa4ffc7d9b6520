#include "speckle/pipeline.hpp"

#include <chrono>

#include "speckle/consistency.hpp"
#include "speckle/embedding.hpp"
#include "speckle/parallel.hpp"

namespace speckle {

namespace {

class StageClock {
 public:
  explicit StageClock(std::vector<StageTiming>& sink) : sink_(sink) {}
  template <typename F>
  auto run(const std::string& stage, F&& f) {
    const auto start = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<decltype(f())>) {
        f();
        sink_.push_back({stage, elapsed(start)});
      } else {
        auto result = f();
        sink_.push_back({stage, elapsed(start)});
        return result;
      }
    } catch (const Error& e) {
      // surface which stage failed, keeping the error code
      std::string what = e.what();
      const std::string prefix = std::string(error_code_name(e.code())) + ": ";
      if (what.rfind(prefix, 0) == 0) what.erase(0, prefix.size());
      throw Error(e.code(), "stage '" + stage + "': " + what);
    }
  }

 private:
  static double elapsed(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  std::vector<StageTiming>& sink_;
};

}  // namespace

AnalyzeResult analyze(const FrameSequence& seq, const PipelineConfig& cfg) {
  cfg.validate();
  if (seq.frame_count() < 2) fail(ErrorCode::MissingFrame, "analyze needs at least 2 frames");
  set_thread_count(cfg.threads);

  AnalyzeResult result;
  result.config = cfg;
  StageClock clock(result.timings);

  const Rect domain = valid_domain(seq.width(), seq.height(), cfg.patch_size);
  const PixelGrid coarse_grid = make_grid(domain, cfg.subsample_stride);

  EmbeddingField coarse = clock.run("embed_coarse", [&] { return embed_all(seq, cfg, coarse_grid); });
  for (uint8_t d : coarse.degenerate) result.degenerate_pixels += d;

  EmbeddingField coarse_norm =
      clock.run("normalize", [&] { return normalize_temporal_std(coarse, cfg.epsilon); });

  TransformField tf_coarse = clock.run("consistency", [&] {
    const ConsistencySystem system = build_consistency_system(coarse_norm, cfg.neighborhood_radius);
    return solve_smallest_eigenvector(system);
  });

  PlaneParams pp_coarse = apply_transform(coarse_norm, tf_coarse);

  if (!cfg.temporal) {
    // Unordered input: consecutive-frame statistics are meaningless, so the
    // scale initialization and the joint optimization are skipped.
    result.maps = clock.run("extract", [&] { return extract_displacement(pp_coarse, &tf_coarse.flags); });
    return result;
  }

  const FeatureNorms fn_coarse =
      clock.run("feature_norms", [&] { return compute_feature_norms(seq, coarse_grid, cfg.patch_size); });

  clock.run("init_scale", [&] {
    const std::vector<double> factors = init_scale_factors(pp_coarse, fn_coarse, cfg.epsilon);
    tf_coarse = scale_transforms(tf_coarse, factors);
    pp_coarse = apply_transform(coarse_norm, tf_coarse);
  });

  EmbeddingField field_full;
  TransformField tf_full;
  FeatureNorms fn_full;
  if (cfg.subsample_stride == 1) {
    field_full = std::move(coarse_norm);
    tf_full = std::move(tf_coarse);
    fn_full = std::move(fn_coarse);
  } else {
    // Optimize at the coarse grid before lifting: the eigenvector is defined
    // only up to per-frame affine height modulations, and healing that gauge
    // over a few dozen coarse pixels is cheap, whereas after interpolation the
    // same errors span the full grid.
    clock.run("optimize_coarse", [&] {
      optimize(tf_coarse, coarse_norm, fn_coarse, cfg);
      pp_coarse = apply_transform(coarse_norm, tf_coarse);
    });

    const PixelGrid full_grid = make_grid(domain, 1);
    field_full = clock.run("embed_full", [&] {
      EmbeddingField f = embed_all(seq, cfg, full_grid);
      return normalize_temporal_std(f, cfg.epsilon);
    });
    tf_full = clock.run("interpolate", [&] {
      return interpolate_transforms(tf_coarse, field_full, pp_coarse, cfg.patch_size);
    });
    fn_full =
        clock.run("feature_norms_full", [&] { return compute_feature_norms(seq, full_grid, cfg.patch_size); });
  }
  for (uint8_t f : tf_full.flags) result.rank_deficient_pixels += f;

  result.optimize_stats =
      clock.run("optimize", [&] { return optimize(tf_full, field_full, fn_full, cfg); });

  const PlaneParams pp_full = apply_transform(field_full, tf_full);
  result.maps = clock.run("extract", [&] { return extract_displacement(pp_full, &field_full.degenerate); });
  return result;
}

}  // namespace speckle
