#include <doctest.h>

#include <random>

#include "speckle/parallel.hpp"
#include "speckle/simulator.hpp"
#include "support.hpp"

using namespace speckle;

namespace {

MotionField static_motion() {
  MotionField m;
  m.kind = MotionField::Kind::StepOffset;
  m.offset_step = 0.0;
  m.offsets = 1;
  m.frames_per_offset = 1000;
  return m;
}

double frame_correlation_patch(const Image& a, const Image& b, int x0, int y0, int side) {
  double ma = 0, mb = 0;
  const int n = side * side;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      ma += a.at(x0 + x, y0 + y);
      mb += b.at(x0 + x, y0 + y);
    }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double da = a.at(x0 + x, y0 + y) - ma;
      const double db = b.at(x0 + x, y0 + y) - mb;
      sab += da * db;
      saa += da * da;
      sbb += db * db;
    }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("static scene with zero noise renders identical frames") {
  SpeckleScene scene;
  scene.width = scene.height = 24;
  scene.noise_sigma = 0.0;
  const SimulationResult sim = render_sequence(scene, static_motion(), 4, 100.0);
  for (int i = 1; i < 4; ++i) CHECK(sim.frames.frames[i].data == sim.frames.frames[0].data);
}

TEST_CASE("same seed renders bit-identical output at any thread count") {
  SpeckleScene scene;
  scene.width = scene.height = 20;
  scene.noise_sigma = 0.02;
  MotionField motion;
  motion.kind = MotionField::Kind::Sine;
  motion.amplitude = 1.0;

  set_thread_count(2);
  const SimulationResult a = render_sequence(scene, motion, 5, 1000.0);
  set_thread_count(1);
  const SimulationResult b = render_sequence(scene, motion, 5, 1000.0);
  set_thread_count(2);
  const SimulationResult c = render_sequence(scene, motion, 5, 1000.0);
  for (int i = 0; i < 5; ++i) {
    CHECK(a.frames.frames[i].data == b.frames.frames[i].data);
    CHECK(a.frames.frames[i].data == c.frames.frames[i].data);
  }

  scene.seed = 2;
  const SimulationResult d = render_sequence(scene, motion, 5, 1000.0);
  CHECK(d.frames.frames[0].data != a.frames.frames[0].data);
}

TEST_CASE("single-frame intensities follow negative-exponential statistics") {
  SpeckleScene scene;
  scene.width = scene.height = 256;
  scene.noise_sigma = 0.0;
  const SimulationResult sim = render_sequence(scene, static_motion(), 1, 100.0);

  std::vector<double> samples;
  samples.reserve(sim.frames.frames[0].pixel_count());
  for (float v : sim.frames.frames[0].data) samples.push_back(v);
  CHECK(testsup::ks_exponential(samples) <= 0.02);

  double mean = 0, var = 0;
  for (double v : samples) mean += v;
  mean /= samples.size();
  for (double v : samples) var += (v - mean) * (v - mean);
  var /= samples.size();
  CHECK(std::sqrt(var) / mean == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("ks statistic oracle: small on exponential samples, large on uniform") {
  std::mt19937_64 rng(71);
  std::exponential_distribution<double> ex(3.0);
  std::vector<double> good(65536);
  for (auto& v : good) v = ex(rng);
  CHECK(testsup::ks_exponential(good) <= 0.01);

  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> bad(65536);
  for (auto& v : bad) v = u(rng);
  CHECK(testsup::ks_exponential(bad) >= 0.1);
}

TEST_CASE("patch correlation decreases monotonically with displacement offset") {
  SpeckleScene scene;
  scene.width = 128;
  scene.height = 128;
  scene.angle_spread = 0.5;
  scene.noise_sigma = 0.0;
  MotionField motion;
  motion.kind = MotionField::Kind::StepOffset;
  motion.offset_step = 0.45;  // ~0.7 wavelengths per step
  motion.offsets = 6;
  motion.frames_per_offset = 1;
  const SimulationResult sim = render_sequence(scene, motion, 6, 100.0);

  // average correlation against frame 0 over 100 patches
  std::vector<double> avg(6, 0.0);
  int count = 0;
  for (int py = 0; py < 10; ++py)
    for (int px = 0; px < 10; ++px) {
      for (int k = 0; k < 6; ++k)
        avg[k] += frame_correlation_patch(sim.frames.frames[0], sim.frames.frames[k], 4 + px * 12,
                                          4 + py * 12, 10);
      ++count;
    }
  for (auto& v : avg) v /= count;
  CHECK(avg[0] == doctest::Approx(1.0));
  for (int k = 0; k + 1 < 6; ++k) CHECK(avg[k + 1] < avg[k]);
}

TEST_CASE("vanishing sensitivity spread makes motion invisible") {
  SpeckleScene scene;
  scene.width = scene.height = 16;
  scene.angle_spread = 1e-12;
  scene.noise_sigma = 0.0;
  MotionField motion;
  motion.kind = MotionField::Kind::Sine;
  motion.amplitude = 3.0;
  const SimulationResult sim = render_sequence(scene, motion, 4, 1000.0);
  for (int i = 1; i < 4; ++i)
    for (size_t p = 0; p < sim.frames.frames[0].pixel_count(); ++p)
      CHECK(std::abs(sim.frames.frames[i].data[p] - sim.frames.frames[0].data[p]) <= 1e-6);

  scene.angle_spread = 0.0;
  CHECK_THROWS_AS(render_sequence(scene, motion, 2, 1000.0), Error);
}

TEST_CASE("scene invariants are enforced") {
  SpeckleScene scene;
  scene.scatterers_per_pixel = 4;
  try {
    scene.validate();
    FAIL("expected InvalidScene");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidScene);
  }
}

TEST_CASE("microstage scenario: 100 frames over 19 offsets, 5 per offset") {
  const Scenario sc = make_scenario("microstage");
  CHECK(sc.frames == 100);
  CHECK(sc.motion.offsets == 19);
  CHECK(sc.motion.offset_level(0) == 0);
  CHECK(sc.motion.offset_level(4) == 0);
  CHECK(sc.motion.offset_level(5) == 1);
  CHECK(sc.motion.offset_level(89) == 17);
  CHECK(sc.motion.offset_level(99) == 18);  // last level absorbs the remainder
  CHECK(sc.motion.displacement(99, 0, 0, sc.frame_rate) == doctest::Approx(18.0));
}

TEST_CASE("sine60 scenario generates the expected waveform") {
  const Scenario sc = make_scenario("sine60");
  CHECK(sc.frames == 256);
  CHECK(sc.frame_rate == 1000.0);
  for (int i : {0, 10, 100}) {
    const double want = sc.motion.amplitude * std::sin(2.0 * std::numbers::pi * 60.0 * i / 1000.0);
    CHECK(sc.motion.displacement(i, 3, 9, 1000.0) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("pulse scenario is a pure cyclic translation at the injected speed") {
  const Scenario sc = make_scenario("pulse");
  const int s = static_cast<int>(sc.motion.speed);
  for (int i = 0; i < 10; ++i)
    for (int y = 5; y < 60; ++y) {
      const double now = sc.motion.displacement(i, 7, y, sc.frame_rate);
      const double next = sc.motion.displacement(i + 1, 7, y + s, sc.frame_rate);
      CHECK(next == doctest::Approx(now).epsilon(1e-12));
    }
}

TEST_CASE("unknown scenario raises UnknownScenario") {
  try {
    make_scenario("wobble");
    FAIL("expected UnknownScenario");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownScenario);
  }
}

TEST_CASE("scenario json round trip preserves every field") {
  const Scenario sc = make_scenario("pulse", {{"seed", "9"}, {"amplitude", "1.5"}});
  const Scenario back = scenario_from_json(sc.to_json());
  CHECK(back.name == sc.name);
  CHECK(back.frames == sc.frames);
  CHECK(back.scene.seed == sc.scene.seed);
  CHECK(back.motion.amplitude == sc.motion.amplitude);
  CHECK(back.motion.speed == sc.motion.speed);
}
