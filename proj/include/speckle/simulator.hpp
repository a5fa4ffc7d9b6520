#pragma once

#include <string>
#include <vector>

#include "speckle/config.hpp"
#include "speckle/types.hpp"

namespace speckle {

/// Random-phasor speckle scene. Each pixel carries an independent population of
/// scatterers with fixed phases; out-of-plane displacement advances every
/// scatterer's phase by its own sensitivity, decorrelating the pattern.
struct SpeckleScene {
  int width = 512;
  int height = 512;
  int scatterers_per_pixel = 64;
  double wavelength = 0.633;     // length units (micrometer-equivalent)
  double angle_spread = 0.25;    // radians of per-scatterer sensitivity variation
  double sensitivity_jitter = 0.15;  // relative per-pixel variation of angle_spread in [0, 0.95]
  double noise_sigma = 0.0;      // additive intensity noise (after scaling)
  double intensity_scale = 0.125;  // mean rendered intensity; keeps the exponential tail below 1
  uint64_t seed = 1;

  void validate() const;  // throws InvalidScene
};

/// Closed-form ground-truth displacement d_true(frame, x, y).
struct MotionField {
  enum class Kind { StepOffset, StandingWave, TravelingPulse, Sine };

  Kind kind = Kind::Sine;
  double amplitude = 1.0;       // peak displacement, length units
  double frequency_hz = 60.0;   // Sine / StandingWave
  double speed = 4.0;           // TravelingPulse, pixels per frame (along y)
  double profile_sigma = 8.0;   // TravelingPulse bump width, pixels
  double spatial_period = 64.0; // TravelingPulse wrap period / StandingWave wavelength, pixels
  double offset_step = 1.0;     // StepOffset increment per level
  int offsets = 19;             // StepOffset level count
  int frames_per_offset = 5;
  int origin = 0;               // y offset aligning wrap period with the analysis domain

  double displacement(int frame, int x, int y, double frame_rate) const;
  int offset_level(int frame) const;  // StepOffset only
};

const char* motion_kind_name(MotionField::Kind kind);

struct Scenario {
  std::string name;
  SpeckleScene scene;
  MotionField motion;
  int frames = 0;
  double frame_rate = 0.0;
  nlohmann::json to_json() const;
};

struct SimulationResult {
  FrameSequence frames;
  MotionField motion;  // echo of the ground truth used
};

/// Render N frames; identical (scene.seed, motion) produce bit-identical output
/// for any thread count.
SimulationResult render_sequence(const SpeckleScene& scene, const MotionField& motion, int frames,
                                 double frame_rate);

/// Ground-truth maps on the full image lattice.
std::vector<Image> truth_maps(const MotionField& motion, int frames, double frame_rate, int width,
                              int height);

/// Named experiment setups ("microstage", "sine60", "pulse", "standing60").
/// Overrides use the same key-value format as the pipeline config.
Scenario make_scenario(const std::string& name, const KeyValueMap& overrides = {});

Scenario scenario_from_json(const nlohmann::json& j);

}  // namespace speckle
