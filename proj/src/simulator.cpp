#include "speckle/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "speckle/rng.hpp"

namespace speckle {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

void SpeckleScene::validate() const {
  if (width < 1 || height < 1) fail(ErrorCode::InvalidScene, "scene dimensions must be positive");
  if (scatterers_per_pixel < 8)
    fail(ErrorCode::InvalidScene, "scatterers_per_pixel must be >= 8 for phasor-sum statistics");
  if (!(wavelength > 0.0)) fail(ErrorCode::InvalidScene, "wavelength must be > 0");
  if (!(angle_spread > 0.0))
    fail(ErrorCode::InvalidScene,
         "angle_spread must be > 0 (a uniform phase shift cancels in the intensity)");
  if (sensitivity_jitter < 0.0 || sensitivity_jitter > 0.95)
    fail(ErrorCode::InvalidScene, "sensitivity_jitter must be in [0, 0.95]");
  if (noise_sigma < 0.0) fail(ErrorCode::InvalidScene, "noise_sigma must be >= 0");
  if (!(intensity_scale > 0.0) || intensity_scale > 1.0)
    fail(ErrorCode::InvalidScene, "intensity_scale must be in (0, 1]");
}

int MotionField::offset_level(int frame) const {
  const int level = frames_per_offset > 0 ? frame / frames_per_offset : 0;
  return std::min(level, offsets - 1);
}

double MotionField::displacement(int frame, int x, int y, double frame_rate) const {
  (void)x;
  switch (kind) {
    case Kind::StepOffset:
      return offset_step * static_cast<double>(offset_level(frame));
    case Kind::Sine:
      return amplitude * std::sin(kTwoPi * frequency_hz * frame / frame_rate);
    case Kind::StandingWave:
      return amplitude * std::sin(kTwoPi * frequency_hz * frame / frame_rate) *
             std::sin(kTwoPi * (y - origin) / spatial_period);
    case Kind::TravelingPulse: {
      // Gaussian bump translating at `speed` px/frame, circular with period
      // spatial_period so every frame is a pure cyclic translation.
      const double period = spatial_period;
      double u = std::fmod(static_cast<double>(y - origin) - speed * frame, period);
      if (u < 0) u += period;
      const double half = period / 2.0;
      const double dist = u < half ? u : period - u;  // circular distance to the bump center at 0
      return amplitude * std::exp(-dist * dist / (2.0 * profile_sigma * profile_sigma));
    }
  }
  return 0.0;
}

const char* motion_kind_name(MotionField::Kind kind) {
  switch (kind) {
    case MotionField::Kind::StepOffset: return "step-offset";
    case MotionField::Kind::StandingWave: return "standing-wave";
    case MotionField::Kind::TravelingPulse: return "traveling-pulse";
    case MotionField::Kind::Sine: return "sine";
  }
  return "unknown";
}

SimulationResult render_sequence(const SpeckleScene& scene, const MotionField& motion, int frames,
                                 double frame_rate) {
  scene.validate();
  if (frames < 1) fail(ErrorCode::InvalidScene, "need at least one frame");
  if (!(frame_rate > 0.0)) fail(ErrorCode::InvalidScene, "frame_rate must be > 0");

  SimulationResult result;
  result.motion = motion;
  result.frames.frame_rate = frame_rate;
  result.frames.bit_depth = 16;
  result.frames.frames.assign(frames, Image(scene.width, scene.height));

  const int ns = scene.scatterers_per_pixel;
  const double wave_number = kTwoPi / scene.wavelength;

#pragma omp parallel for schedule(dynamic, 4) collapse(1)
  for (int y = 0; y < scene.height; ++y) {
    std::vector<double> phase(ns), sensitivity(ns);
    for (int x = 0; x < scene.width; ++x) {
      Rng rng = Rng::at_pixel(scene.seed, x, y);
      // Per-pixel sensitivity spread: rough surfaces respond unevenly, which
      // keeps the per-pixel embeddings from sharing their higher harmonics.
      const double spread =
          scene.angle_spread * (1.0 + scene.sensitivity_jitter * (2.0 * rng.next_double() - 1.0));
      for (int j = 0; j < ns; ++j) {
        phase[j] = kTwoPi * rng.next_double();
        const double theta = spread * rng.next_double();
        sensitivity[j] = wave_number * (1.0 + std::cos(theta));
      }
      for (int i = 0; i < frames; ++i) {
        const double d = motion.displacement(i, x, y, frame_rate);
        double re = 0.0, im = 0.0;
        for (int j = 0; j < ns; ++j) {
          const double a = phase[j] + sensitivity[j] * d;
          re += std::cos(a);
          im += std::sin(a);
        }
        double intensity = (re * re + im * im) / static_cast<double>(ns);
        intensity *= scene.intensity_scale;
        if (scene.noise_sigma > 0.0) intensity += scene.noise_sigma * rng.next_gaussian();
        result.frames.frames[i].at(x, y) =
            static_cast<float>(std::clamp(intensity, 0.0, 1.0));
      }
    }
  }
  return result;
}

std::vector<Image> truth_maps(const MotionField& motion, int frames, double frame_rate, int width,
                              int height) {
  std::vector<Image> maps(frames, Image(width, height));
  for (int i = 0; i < frames; ++i)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        maps[i].at(x, y) = static_cast<float>(motion.displacement(i, x, y, frame_rate));
  return maps;
}

namespace {

double map_double(const KeyValueMap& m, const std::string& key, double fallback) {
  auto it = m.find(key);
  if (it == m.end()) return fallback;
  return std::stod(it->second);
}

long map_long(const KeyValueMap& m, const std::string& key, long fallback) {
  auto it = m.find(key);
  if (it == m.end()) return fallback;
  return std::stol(it->second);
}

}  // namespace

Scenario make_scenario(const std::string& name, const KeyValueMap& overrides) {
  static const char* known_keys[] = {
      "width",         "height",        "frames",        "frame_rate",      "seed",
      "scatterers",    "angle_spread",  "sensitivity_jitter",              "noise_sigma",
      "intensity_scale",               "wavelength",
      "amplitude",     "frequency_hz",  "speed",         "profile_sigma",   "spatial_period",
      "offset_step",   "offsets",       "frames_per_offset",               "origin",
  };
  for (const auto& [key, value] : overrides) {
    bool ok = false;
    for (const char* k : known_keys) ok = ok || key == k;
    if (!ok) fail(ErrorCode::InvalidConfig, "unknown scenario key '" + key + "'");
  }

  Scenario sc;
  sc.name = name;
  // 74x74 leaves a 64x64 valid domain for the default 11x11 patch.
  sc.scene.width = 74;
  sc.scene.height = 74;
  sc.scene.seed = 1;
  sc.frame_rate = 1000.0;

  if (name == "microstage") {
    // 100 unordered frames over 19 known offsets, 5 frames per offset with the
    // last level absorbing the remainder; analyzed with temporal = false.
    sc.frames = 100;
    sc.motion.kind = MotionField::Kind::StepOffset;
    sc.motion.offset_step = 1.0;
    sc.motion.offsets = 19;
    sc.motion.frames_per_offset = 5;
    sc.scene.angle_spread = 0.10;
    sc.scene.noise_sigma = 0.03;
  } else if (name == "sine60") {
    sc.frames = 256;
    sc.motion.kind = MotionField::Kind::Sine;
    sc.motion.amplitude = 2.0;
    sc.motion.frequency_hz = 60.0;
    sc.scene.angle_spread = 0.2;
    sc.scene.noise_sigma = 0.02;
  } else if (name == "pulse") {
    sc.frames = 48;
    sc.motion.kind = MotionField::Kind::TravelingPulse;
    sc.motion.amplitude = 5.0;
    sc.motion.speed = 4.0;
    sc.motion.profile_sigma = 12.0;
    sc.motion.spatial_period = 64.0;
    sc.motion.origin = 5;  // patch margin of the default 11x11 patch
    sc.scene.angle_spread = 0.2;
    sc.scene.noise_sigma = 0.02;
  } else if (name == "standing60") {
    sc.frames = 128;
    sc.motion.kind = MotionField::Kind::StandingWave;
    sc.motion.amplitude = 2.0;
    sc.motion.frequency_hz = 60.0;
    sc.motion.spatial_period = 32.0;
    sc.motion.origin = 5;
    sc.scene.angle_spread = 0.2;
    sc.scene.noise_sigma = 0.02;
  } else {
    fail(ErrorCode::UnknownScenario, "unknown scenario '" + name +
                                         "' (known: microstage, sine60, pulse, standing60)");
  }

  sc.scene.width = static_cast<int>(map_long(overrides, "width", sc.scene.width));
  sc.scene.height = static_cast<int>(map_long(overrides, "height", sc.scene.height));
  sc.frames = static_cast<int>(map_long(overrides, "frames", sc.frames));
  sc.frame_rate = map_double(overrides, "frame_rate", sc.frame_rate);
  sc.scene.seed = static_cast<uint64_t>(map_long(overrides, "seed", static_cast<long>(sc.scene.seed)));
  sc.scene.scatterers_per_pixel =
      static_cast<int>(map_long(overrides, "scatterers", sc.scene.scatterers_per_pixel));
  sc.scene.angle_spread = map_double(overrides, "angle_spread", sc.scene.angle_spread);
  sc.scene.sensitivity_jitter =
      map_double(overrides, "sensitivity_jitter", sc.scene.sensitivity_jitter);
  sc.scene.noise_sigma = map_double(overrides, "noise_sigma", sc.scene.noise_sigma);
  sc.scene.intensity_scale = map_double(overrides, "intensity_scale", sc.scene.intensity_scale);
  sc.scene.wavelength = map_double(overrides, "wavelength", sc.scene.wavelength);
  sc.motion.amplitude = map_double(overrides, "amplitude", sc.motion.amplitude);
  sc.motion.frequency_hz = map_double(overrides, "frequency_hz", sc.motion.frequency_hz);
  sc.motion.speed = map_double(overrides, "speed", sc.motion.speed);
  sc.motion.profile_sigma = map_double(overrides, "profile_sigma", sc.motion.profile_sigma);
  sc.motion.spatial_period = map_double(overrides, "spatial_period", sc.motion.spatial_period);
  sc.motion.offset_step = map_double(overrides, "offset_step", sc.motion.offset_step);
  sc.motion.offsets = static_cast<int>(map_long(overrides, "offsets", sc.motion.offsets));
  sc.motion.frames_per_offset =
      static_cast<int>(map_long(overrides, "frames_per_offset", sc.motion.frames_per_offset));
  sc.motion.origin = static_cast<int>(map_long(overrides, "origin", sc.motion.origin));
  sc.scene.validate();
  return sc;
}

nlohmann::json Scenario::to_json() const {
  return nlohmann::json{
      {"name", name},
      {"frames", frames},
      {"frame_rate", frame_rate},
      {"scene",
       {{"width", scene.width},
        {"height", scene.height},
        {"scatterers_per_pixel", scene.scatterers_per_pixel},
        {"wavelength", scene.wavelength},
        {"angle_spread", scene.angle_spread},
        {"sensitivity_jitter", scene.sensitivity_jitter},
        {"noise_sigma", scene.noise_sigma},
        {"intensity_scale", scene.intensity_scale},
        {"seed", scene.seed}}},
      {"motion",
       {{"kind", motion_kind_name(motion.kind)},
        {"amplitude", motion.amplitude},
        {"frequency_hz", motion.frequency_hz},
        {"speed", motion.speed},
        {"profile_sigma", motion.profile_sigma},
        {"spatial_period", motion.spatial_period},
        {"offset_step", motion.offset_step},
        {"offsets", motion.offsets},
        {"frames_per_offset", motion.frames_per_offset},
        {"origin", motion.origin}}},
  };
}

Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario sc;
  sc.name = j.at("name").get<std::string>();
  sc.frames = j.at("frames").get<int>();
  sc.frame_rate = j.at("frame_rate").get<double>();
  const auto& s = j.at("scene");
  sc.scene.width = s.at("width").get<int>();
  sc.scene.height = s.at("height").get<int>();
  sc.scene.scatterers_per_pixel = s.at("scatterers_per_pixel").get<int>();
  sc.scene.wavelength = s.at("wavelength").get<double>();
  sc.scene.angle_spread = s.at("angle_spread").get<double>();
  sc.scene.sensitivity_jitter = s.value("sensitivity_jitter", sc.scene.sensitivity_jitter);
  sc.scene.noise_sigma = s.at("noise_sigma").get<double>();
  sc.scene.intensity_scale = s.at("intensity_scale").get<double>();
  sc.scene.seed = s.at("seed").get<uint64_t>();
  const auto& m = j.at("motion");
  const std::string kind = m.at("kind").get<std::string>();
  if (kind == "step-offset") sc.motion.kind = MotionField::Kind::StepOffset;
  else if (kind == "standing-wave") sc.motion.kind = MotionField::Kind::StandingWave;
  else if (kind == "traveling-pulse") sc.motion.kind = MotionField::Kind::TravelingPulse;
  else if (kind == "sine") sc.motion.kind = MotionField::Kind::Sine;
  else fail(ErrorCode::UnknownScenario, "unknown motion kind '" + kind + "'");
  sc.motion.amplitude = m.at("amplitude").get<double>();
  sc.motion.frequency_hz = m.at("frequency_hz").get<double>();
  sc.motion.speed = m.at("speed").get<double>();
  sc.motion.profile_sigma = m.at("profile_sigma").get<double>();
  sc.motion.spatial_period = m.at("spatial_period").get<double>();
  sc.motion.offset_step = m.at("offset_step").get<double>();
  sc.motion.offsets = m.at("offsets").get<int>();
  sc.motion.frames_per_offset = m.at("frames_per_offset").get<int>();
  sc.motion.origin = m.at("origin").get<int>();
  sc.scene.validate();
  return sc;
}

}  // namespace speckle
