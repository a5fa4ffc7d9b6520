// speckle — simulate, analyze, evaluate and render laser-speckle micro-motion runs.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage / input-contract error.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "speckle/config.hpp"
#include "speckle/error.hpp"
#include "speckle/imageio.hpp"
#include "speckle/metrics.hpp"
#include "speckle/parallel.hpp"
#include "speckle/pipeline.hpp"
#include "speckle/plot.hpp"
#include "speckle/rng.hpp"
#include "speckle/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace speckle;

namespace {

constexpr const char* kToolVersion = "1.0.0";

KeyValueMap parse_overrides(const std::vector<std::string>& sets) {
  KeyValueMap map;
  for (const auto& s : sets) {
    const size_t eq = s.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::InvalidConfig, "--set expects key=value, got '" + s + "'");
    map[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return map;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::IoError, path + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot create " + path);
  out << j.dump(2) << "\n";
}

json checksum_files(const fs::path& base, const std::vector<std::string>& rel_paths) {
  json arr = json::array();
  for (const auto& rel : rel_paths)
    arr.push_back({{"path", rel}, {"crc32", file_crc32((base / rel).string())}});
  return arr;
}

json timings_json(const std::vector<StageTiming>& timings) {
  json arr = json::array();
  for (const auto& t : timings) arr.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
  return arr;
}

int cmd_simulate(const std::string& scenario_name, const std::string& out_dir,
                 const std::string& config_path, const std::vector<std::string>& sets,
                 bool previews) {
  const auto t0 = std::chrono::steady_clock::now();
  KeyValueMap overrides;
  if (!config_path.empty()) overrides = parse_key_value_file(config_path);
  for (const auto& [key, value] : parse_overrides(sets)) overrides[key] = value;
  Scenario sc = make_scenario(scenario_name, overrides);

  std::cerr << "simulate: scenario '" << sc.name << "', " << sc.frames << " frames of "
            << sc.scene.width << "x" << sc.scene.height << "\n";
  SimulationResult sim = render_sequence(sc.scene, sc.motion, sc.frames, sc.frame_rate);

  const fs::path out(out_dir);
  fs::create_directories(out / "frames");
  std::vector<std::string> frame_files;
  for (int i = 0; i < sc.frames; ++i) {
    const std::string rel = "frames/" + fs::path(pattern_path("frame_{index}.pgm", i)).string();
    save_image((out / rel).string(), sim.frames.frames[i], 16);
    frame_files.push_back(rel);
  }

  const std::vector<Image> truth =
      truth_maps(sim.motion, sc.frames, sc.frame_rate, sc.scene.width, sc.scene.height);
  write_displacement(truth, (out / "truth").string(), sc.frame_rate,
                     json{{"ground_truth", true}, {"scenario", sc.name}}, false);
  if (previews) {
    fs::create_directories(out / "previews");
    for (int i = 0; i < sc.frames; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "previews/frame_%04d.png", i);
      save_image((out / buf).string(), sim.frames.frames[i], 8);
    }
  }

  std::vector<std::string> truth_files;
  for (int i = 0; i < sc.frames; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "truth/d_%04d.f32", i);
    truth_files.push_back(buf);
  }

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json manifest{
      {"tool", "speckle"},
      {"version", kToolVersion},
      {"command", "simulate"},
      {"scenario", sc.to_json()},
      {"frame_pattern", "frames/frame_{index}.pgm"},
      {"frame_rate", sc.frame_rate},
      {"outputs", checksum_files(out, frame_files)},
      {"truth_outputs", checksum_files(out, truth_files)},
      {"timings", json::array({{{"stage", "simulate"}, {"seconds", seconds}}})},
  };
  write_json_file((out / "manifest.json").string(), manifest);
  std::cerr << "simulate: wrote " << sc.frames << " frames + truth to " << out_dir << " in "
            << seconds << " s\n";
  return 0;
}

int cmd_analyze(const std::string& in_dir, const std::string& out_dir,
                const std::string& config_path, const std::vector<std::string>& sets,
                std::string pattern, double frame_rate, int threads, bool previews) {
  PipelineConfig cfg;
  if (!config_path.empty()) cfg = config_from_map(parse_key_value_file(config_path), cfg);
  cfg = config_from_map(parse_overrides(sets), cfg);
  if (threads > 0) cfg.threads = threads;

  const fs::path in(in_dir);
  if (pattern.empty()) pattern = (in / "frames" / "frame_{index}.pgm").string();
  else pattern = (in / pattern).string();
  if (frame_rate <= 0.0) {
    const fs::path manifest_path = in / "manifest.json";
    if (fs::exists(manifest_path)) {
      const json m = load_json_file(manifest_path.string());
      frame_rate = m.value("frame_rate", 0.0);
    }
  }
  if (frame_rate <= 0.0)
    fail(ErrorCode::InvalidConfig, "frame rate unknown: pass --frame-rate or provide a manifest");

  std::cerr << "analyze: loading " << pattern << "\n";
  const FrameSequence seq = load_sequence(pattern, frame_rate);
  std::cerr << "analyze: " << seq.frame_count() << " frames of " << seq.width() << "x"
            << seq.height() << " at " << frame_rate << " fps\n";

  AnalyzeResult result = analyze(seq, cfg);

  const fs::path out(out_dir);
  write_displacement(result.maps.maps, (out / "maps").string(), frame_rate, config_to_json(cfg),
                     previews);
  {
    Image mask = result.maps.mask;
    write_raw_f32((out / "maps" / "mask.f32").string(), mask);
  }

  std::vector<std::string> map_files;
  for (size_t i = 0; i < result.maps.maps.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "maps/d_%04zu.f32", i);
    map_files.push_back(buf);
  }

  json manifest{
      {"tool", "speckle"},
      {"version", kToolVersion},
      {"command", "analyze"},
      {"input_dir", in_dir},
      {"input_pattern", pattern},
      {"frame_rate", frame_rate},
      {"config", config_to_json(cfg)},
      {"grid",
       {{"x0", result.maps.grid.x0},
        {"y0", result.maps.grid.y0},
        {"stride", result.maps.grid.stride},
        {"cols", result.maps.grid.cols},
        {"rows", result.maps.grid.rows}}},
      {"degenerate_pixels", result.degenerate_pixels},
      {"rank_deficient_pixels", result.rank_deficient_pixels},
      {"outputs", checksum_files(out, map_files)},
      {"timings", timings_json(result.timings)},
  };
  if (cfg.temporal) {
    manifest["optimize"] = {{"iterations", result.optimize_stats.iterations},
                            {"initial_objective", result.optimize_stats.initial_objective},
                            {"final_objective", result.optimize_stats.final_objective},
                            {"converged", result.optimize_stats.converged}};
  }
  write_json_file((out / "manifest.json").string(), manifest);

  for (const auto& t : result.timings)
    std::cerr << "analyze: stage " << t.stage << " took " << t.seconds << " s\n";
  std::cerr << "analyze: wrote " << map_files.size() << " displacement maps to " << out_dir << "\n";
  return 0;
}

struct RunData {
  json manifest;
  std::vector<Image> maps;
  Image mask;
  PixelGrid grid;
  double frame_rate = 0.0;
};

RunData load_run(const std::string& run_dir, bool verify) {
  RunData run;
  const fs::path dir(run_dir);
  run.manifest = load_json_file((dir / "manifest.json").string());
  if (verify) {
    for (const auto& entry : run.manifest.at("outputs")) {
      const std::string rel = entry.at("path").get<std::string>();
      const uint32_t want = entry.at("crc32").get<uint32_t>();
      const uint32_t got = file_crc32((dir / rel).string());
      if (got != want)
        fail(ErrorCode::IoError, "checksum mismatch for " + rel + " (file was modified?)");
    }
  }
  DisplacementMeta meta;
  run.maps = read_displacement((dir / "maps").string(), &meta);
  run.frame_rate = meta.frame_rate;
  const json& g = run.manifest.at("grid");
  run.grid.x0 = g.at("x0").get<int>();
  run.grid.y0 = g.at("y0").get<int>();
  run.grid.stride = g.at("stride").get<int>();
  run.grid.cols = g.at("cols").get<int>();
  run.grid.rows = g.at("rows").get<int>();
  const fs::path mask_path = dir / "maps" / "mask.f32";
  if (fs::exists(mask_path))
    run.mask = read_raw_f32(mask_path.string(), run.grid.cols, run.grid.rows);
  else
    run.mask = Image(run.grid.cols, run.grid.rows, 1.0f);
  return run;
}

std::vector<double> pixel_trace(const std::vector<Image>& maps, int i, int j) {
  std::vector<double> trace(maps.size());
  for (size_t t = 0; t < maps.size(); ++t) trace[t] = maps[t].at(i, j);
  return trace;
}

int cmd_metrics(const std::string& run_dir, const std::string& truth_dir,
                const std::string& reference_csv, const std::string& pixel_spec,
                const std::string& out_dir, int samples, const std::string& wave_axis,
                double expect_hz, uint64_t seed) {
  RunData run = load_run(run_dir, /*verify=*/true);
  const fs::path out(out_dir.empty() ? fs::path(run_dir) / "metrics" : fs::path(out_dir));
  fs::create_directories(out);

  EvalReport report;
  report.metadata["run"] = run_dir;
  const int n_frames = static_cast<int>(run.maps.size());

  // Valid sample pixels (mask == 1).
  std::vector<int> valid;
  for (int p = 0; p < run.grid.size(); ++p)
    if (run.mask.data[p] > 0.5f) valid.push_back(p);
  if (valid.empty()) fail(ErrorCode::ConstantSignal, "run has no valid pixels");

  std::vector<Image> truth;
  json truth_manifest;
  MotionField truth_motion;
  bool have_motion = false;
  if (!truth_dir.empty()) {
    // Accept either the simulate output root or its truth/ subdirectory.
    fs::path tdir(truth_dir);
    if (fs::exists(tdir / "truth" / "maps.json")) tdir /= "truth";
    truth = read_displacement(tdir.string());
    const fs::path man = tdir.parent_path() / "manifest.json";
    if (fs::exists(man)) {
      truth_manifest = load_json_file(man.string());
      if (truth_manifest.contains("scenario")) {
        truth_motion = scenario_from_json(truth_manifest.at("scenario")).motion;
        have_motion = true;
      }
    }
    if (static_cast<int>(truth.size()) != n_frames)
      fail(ErrorCode::DimensionMismatch, "truth frame count differs from run");
  }

  auto truth_trace_at = [&](int i, int j) {
    std::vector<double> trace(n_frames);
    const int x = run.grid.x_at(i), y = run.grid.y_at(j);
    for (int t = 0; t < n_frames; ++t) trace[t] = truth[t].at(x, y);
    return trace;
  };

  // NCC of recovered vs reference traces at sampled pixels, one global sign.
  std::vector<std::pair<int, int>> sample_px;
  if (!truth.empty()) {
    Rng rng(seed);
    std::vector<int> pool = valid;
    for (int k = 0; k < samples && !pool.empty(); ++k) {
      const size_t pick = static_cast<size_t>(rng.next_double() * pool.size());
      const int p = pool[std::min(pick, pool.size() - 1)];
      pool.erase(pool.begin() + std::min(pick, pool.size() - 1));
      sample_px.emplace_back(p % run.grid.cols, p / run.grid.cols);
    }
    double sign_vote = 0.0;
    std::vector<double> raw;
    for (auto [i, j] : sample_px) {
      const auto est = pixel_trace(run.maps, i, j);
      const auto ref = truth_trace_at(i, j);
      try {
        const double r = ncc(est, ref);
        raw.push_back(r);
        sign_vote += r;
      } catch (const Error&) {
        raw.push_back(0.0);  // constant trace: counts as failure to correlate
      }
    }
    const double sign = sign_vote >= 0.0 ? 1.0 : -1.0;
    for (double r : raw) report.ncc_values.push_back(sign * r);
    double acc = 0.0;
    for (double r : report.ncc_values) acc += r;
    report.ncc_mean = report.ncc_values.empty() ? 0.0 : acc / report.ncc_values.size();
  }

  if (!reference_csv.empty()) {
    int px = -1, py = -1;
    if (std::sscanf(pixel_spec.c_str(), "%d,%d", &px, &py) != 2)
      fail(ErrorCode::InvalidConfig, "--pixel expects X,Y image coordinates");
    // nearest grid pixel
    const int gi = std::clamp((px - run.grid.x0 + run.grid.stride / 2) / run.grid.stride, 0,
                              run.grid.cols - 1);
    const int gj = std::clamp((py - run.grid.y0 + run.grid.stride / 2) / run.grid.stride, 0,
                              run.grid.rows - 1);
    std::ifstream in(reference_csv);
    if (!in) fail(ErrorCode::IoError, "cannot open " + reference_csv);
    std::vector<double> ref;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ref.push_back(std::stod(line));
    }
    if (static_cast<int>(ref.size()) != n_frames)
      fail(ErrorCode::DimensionMismatch, "reference CSV length differs from run frames");
    const double r = ncc(pixel_trace(run.maps, gi, gj), ref);
    report.ncc_values.push_back(std::abs(r));
    report.ncc_mean = std::abs(r);
    report.metadata["reference_pixel"] = {gi, gj};
  }

  // Linearity against known offsets (step-offset ground truth).
  if (have_motion && truth_motion.kind == MotionField::Kind::StepOffset) {
    std::vector<double> per_frame(n_frames, 0.0);
    for (int t = 0; t < n_frames; ++t) {
      double acc = 0.0;
      for (int p : valid) acc += run.maps[t].data[p];
      per_frame[t] = acc / static_cast<double>(valid.size());
    }
    std::vector<double> est(truth_motion.offsets, 0.0), cnt(truth_motion.offsets, 0.0),
        offsets(truth_motion.offsets);
    for (int t = 0; t < n_frames; ++t) {
      const int level = truth_motion.offset_level(t);
      est[level] += per_frame[t];
      cnt[level] += 1.0;
    }
    for (int k = 0; k < truth_motion.offsets; ++k) {
      est[k] /= std::max(cnt[k], 1.0);
      offsets[k] = truth_motion.offset_step * k;
    }
    report.linearity_rmse = linearity_rmse(est, offsets);
    const double r = pearson(est, offsets);
    report.linearity_pearson = std::abs(r);
    std::vector<double> est_signed = est;
    if (r < 0)
      for (double& v : est_signed) v = -v;
    save_line_plot((out / "linearity.png").string(),
                   {{offsets, minmax_scale(offsets), 0.8f},
                    {offsets, minmax_scale(est_signed), 0.0f}});
  }

  // Spectral peak across valid pixels.
  if (n_frames >= 8) {
    const double bin_hz = run.frame_rate / n_frames;
    std::vector<double> peaks;
    peaks.reserve(valid.size());
    for (int p : valid) {
      const auto trace = pixel_trace(run.maps, p % run.grid.cols, p / run.grid.cols);
      const auto [lo, hi] = std::minmax_element(trace.begin(), trace.end());
      if (!(*hi > *lo)) continue;
      peaks.push_back(dominant_frequency(power_spectrum(trace, run.frame_rate)));
    }
    if (!peaks.empty()) {
      double target = expect_hz;
      if (target <= 0.0 && have_motion &&
          (truth_motion.kind == MotionField::Kind::Sine ||
           truth_motion.kind == MotionField::Kind::StandingWave))
        target = truth_motion.frequency_hz;
      if (target > 0.0) {
        int hits = 0;
        for (double f : peaks)
          if (std::abs(f - target) <= bin_hz) ++hits;
        report.spectral_peak_fraction = static_cast<double>(hits) / peaks.size();
        report.spectral_peak_hz = target;
        report.metadata["spectral_bin_hz"] = bin_hz;
      }
      // spectrum plot at the center valid pixel
      const int p = valid[valid.size() / 2];
      const Spectrum spec =
          power_spectrum(pixel_trace(run.maps, p % run.grid.cols, p / run.grid.cols), run.frame_rate);
      save_line_plot((out / "spectrum.png").string(), {{spec.freq_hz, spec.power, 0.0f}});
    }
  }

  if (!wave_axis.empty()) {
    const Axis axis = wave_axis == "horizontal" ? Axis::Horizontal : Axis::Vertical;
    report.wave_speed = wavefront_speed(run.maps, axis);
    report.wave_speed_valid = true;
  }

  // Center-column slice profiles of first/middle/last frames.
  {
    std::vector<PlotSeries> slices;
    const int i = run.grid.cols / 2;
    const std::vector<int> picks = {0, n_frames / 2, n_frames - 1};
    float shade = 0.0f;
    for (int t : picks) {
      PlotSeries s;
      for (int j = 0; j < run.grid.rows; ++j) {
        s.x.push_back(j);
        s.y.push_back(run.maps[t].at(i, j));
      }
      s.shade = shade;
      shade += 0.35f;
      slices.push_back(std::move(s));
    }
    save_line_plot((out / "slices.png").string(), slices);
  }

  write_json_file((out / "report.json").string(), report.to_json());
  std::cout << report.to_json().dump(2) << "\n";
  return 0;
}

int cmd_render(const std::string& run_dir, const std::string& out_dir) {
  RunData run = load_run(run_dir, /*verify=*/false);
  const fs::path out(out_dir.empty() ? fs::path(run_dir) / "render" : fs::path(out_dir));
  fs::create_directories(out);

  float lo = std::numeric_limits<float>::max(), hi = std::numeric_limits<float>::lowest();
  for (const auto& m : run.maps)
    for (float v : m.data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const float span = hi > lo ? hi - lo : 1.0f;
  for (size_t t = 0; t < run.maps.size(); ++t) {
    Image img(run.maps[t].width, run.maps[t].height);
    for (size_t p = 0; p < img.pixel_count(); ++p)
      img.data[p] = (run.maps[t].data[p] - lo) / span;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "d_%04zu.png", t);
    save_image((out / buf).string(), img, 16);
  }
  std::cerr << "render: wrote " << run.maps.size() << " preview images to " << out << "\n";
  return 0;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::MissingFrame:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::UnsupportedBitDepth:
    case ErrorCode::UnknownScenario:
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidScene:
      return 2;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  Eigen::setNbThreads(1);  // our parallelism is per-pixel, keep Eigen serial

  CLI::App app{"speckle — dense out-of-plane micro-motion estimation from laser speckle video"};
  app.require_subcommand(1);

  // simulate
  std::string scenario, sim_out, sim_config;
  std::vector<std::string> sim_sets;
  bool sim_previews = false;
  auto* sim = app.add_subcommand("simulate", "render a synthetic speckle scenario");
  sim->add_option("scenario", scenario, "scenario name (microstage, sine60, pulse, standing60)")
      ->required();
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--config", sim_config, "scenario config file (key = value lines)");
  sim->add_option("--set", sim_sets, "override scenario key=value (repeatable)");
  sim->add_flag("--previews", sim_previews, "also write 8-bit preview PNGs");

  // analyze
  std::string an_in, an_out, an_config, an_pattern;
  std::vector<std::string> an_sets;
  double an_fps = 0.0;
  int an_threads = 0;
  bool an_previews = false;
  auto* an = app.add_subcommand("analyze", "estimate displacement maps from a frame sequence");
  an->add_option("--in", an_in, "input directory (simulate output or frames dir)")->required();
  an->add_option("--out", an_out, "output run directory")->required();
  an->add_option("--config", an_config, "pipeline config file (key = value lines)");
  an->add_option("--set", an_sets, "override config key=value (repeatable)");
  an->add_option("--pattern", an_pattern, "frame filename pattern relative to --in");
  an->add_option("--frame-rate", an_fps, "frames per second (default: from input manifest)");
  an->add_option("--threads", an_threads, "worker thread cap");
  an->add_flag("--previews", an_previews, "write preview PNGs next to the maps");

  // metrics
  std::string me_run, me_truth, me_ref, me_pixel, me_out, me_axis;
  int me_samples = 10;
  double me_hz = 0.0;
  uint64_t me_seed = 7;
  auto* me = app.add_subcommand("metrics", "evaluate a run against ground truth or a reference");
  me->add_option("--run", me_run, "analyze output directory")->required();
  me->add_option("--truth", me_truth, "simulate output (or its truth/ dir)");
  me->add_option("--reference", me_ref, "reference CSV of one displacement trace");
  me->add_option("--pixel", me_pixel, "image pixel X,Y for --reference");
  me->add_option("--out", me_out, "report directory (default RUN/metrics)");
  me->add_option("--samples", me_samples, "number of sampled pixels for NCC");
  me->add_option("--wave-axis", me_axis, "measure wavefront speed: vertical|horizontal")
      ->check(CLI::IsMember({"vertical", "horizontal"}));
  me->add_option("--expect-hz", me_hz, "expected spectral peak frequency");
  me->add_option("--seed", me_seed, "sample-pixel RNG seed");

  // render
  std::string re_run, re_out;
  auto* re = app.add_subcommand("render", "write grayscale previews of a run's maps");
  re->add_option("--run", re_run, "analyze output directory")->required();
  re->add_option("--out", re_out, "output directory (default RUN/render)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(scenario, sim_out, sim_config, sim_sets, sim_previews);
    if (an->parsed())
      return cmd_analyze(an_in, an_out, an_config, an_sets, an_pattern, an_fps, an_threads,
                         an_previews);
    if (me->parsed())
      return cmd_metrics(me_run, me_truth, me_ref, me_pixel, me_out, me_samples, me_axis, me_hz,
                         me_seed);
    if (re->parsed()) return cmd_render(re_run, re_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
