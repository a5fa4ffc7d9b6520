#include <doctest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "speckle/imageio.hpp"
#include "support.hpp"

using namespace speckle;

namespace {

Image checker(int w, int h, float a, float b) {
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = (x + y) % 2 ? a : b;
  return img;
}

}  // namespace

TEST_CASE("pgm round trip preserves quantized values at both depths") {
  testsup::TempDir dir("pgm");
  for (int depth : {8, 16}) {
    Image img(17, 9);
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& v : img.data) v = u(rng);
    const std::string path = dir.str("img" + std::to_string(depth) + ".pgm");
    save_image(path, img, depth);
    int got_depth = 0;
    const Image back = load_image(path, &got_depth);
    CHECK(got_depth == depth);
    REQUIRE(back.same_size(img));
    const float tol = 0.5f / ((1 << depth) - 1);
    for (size_t i = 0; i < img.pixel_count(); ++i)
      CHECK(std::abs(back.data[i] - img.data[i]) <= tol * 1.0001f);
  }
}

TEST_CASE("png round trip matches pgm behaviour") {
  testsup::TempDir dir("png");
  const Image img = checker(23, 11, 0.25f, 0.75f);
  for (int depth : {8, 16}) {
    const std::string path = dir.str("img" + std::to_string(depth) + ".png");
    save_image(path, img, depth);
    int got_depth = 0;
    const Image back = load_image(path, &got_depth);
    CHECK(got_depth == depth);
    REQUIRE(back.same_size(img));
    const float tol = 0.5f / ((1 << depth) - 1);
    for (size_t i = 0; i < img.pixel_count(); ++i)
      CHECK(std::abs(back.data[i] - img.data[i]) <= tol * 1.0001f);
  }
}

TEST_CASE("saturated source maps to exactly 1.0") {
  testsup::TempDir dir("sat");
  for (int depth : {8, 16}) {
    const std::string path = dir.str("sat.pgm");
    save_image(path, Image(4, 4, 1.0f), depth);
    const Image back = load_image(path);
    for (float v : back.data) CHECK(v == 1.0f);
  }
}

TEST_CASE("load_sequence: two identical frames form a minimal sequence") {
  testsup::TempDir dir("seq2");
  const Image img = checker(32, 32, 0.2f, 0.8f);
  save_image(dir.str("f_0000.pgm"), img, 16);
  save_image(dir.str("f_0001.pgm"), img, 16);
  const FrameSequence seq = load_sequence(dir.str("f_{index}.pgm"), 500.0);
  CHECK(seq.frame_count() == 2);
  CHECK(seq.width() == 32);
  CHECK(seq.height() == 32);
  CHECK(seq.frame_rate == 500.0);
  CHECK(seq.bit_depth == 16);
}

TEST_CASE("load_sequence: mixed dimensions raise DimensionMismatch") {
  testsup::TempDir dir("seqdim");
  save_image(dir.str("f_0000.pgm"), checker(32, 32, 0.1f, 0.9f), 8);
  save_image(dir.str("f_0001.pgm"), checker(64, 64, 0.1f, 0.9f), 8);
  try {
    load_sequence(dir.str("f_{index}.pgm"), 100.0);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("load_sequence: index gap raises MissingFrame") {
  testsup::TempDir dir("seqgap");
  const Image img = checker(16, 16, 0.3f, 0.6f);
  save_image(dir.str("f_0000.pgm"), img, 8);
  save_image(dir.str("f_0001.pgm"), img, 8);
  save_image(dir.str("f_0003.pgm"), img, 8);
  try {
    load_sequence(dir.str("f_{index}.pgm"), 100.0);
    FAIL("expected MissingFrame");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingFrame);
  }
}

TEST_CASE("load_sequence: fewer than two frames raises MissingFrame") {
  testsup::TempDir dir("seq1");
  save_image(dir.str("f_0000.pgm"), checker(16, 16, 0.3f, 0.6f), 8);
  CHECK_THROWS_AS(load_sequence(dir.str("f_{index}.pgm"), 100.0), Error);
}

TEST_CASE("write_displacement: zero field yields a 64-byte zero raw file") {
  testsup::TempDir dir("wd0");
  write_displacement({Image(4, 4, 0.0f)}, dir.str("out"), 100.0, nlohmann::json::object());
  const auto bytes = read_file_bytes(dir.str("out/d_0000.f32"));
  REQUIRE(bytes.size() == 64);
  for (unsigned char b : bytes) CHECK(b == 0);
}

TEST_CASE("write_displacement: three maps produce three raw files and one sidecar") {
  testsup::TempDir dir("wd3");
  std::vector<Image> maps(3, Image(6, 5, 0.5f));
  write_displacement(maps, dir.str("out"), 250.0, nlohmann::json{{"patch_size", 11}});
  int raw = 0, json_files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.str("out"))) {
    const auto ext = e.path().extension();
    if (ext == ".f32") ++raw;
    if (ext == ".json") ++json_files;
  }
  CHECK(raw == 3);
  CHECK(json_files == 1);
}

TEST_CASE("displacement write-then-read round trip is bit exact") {
  testsup::TempDir dir("wrt");
  std::mt19937_64 rng(7);
  std::normal_distribution<float> n(0.0f, 3.0f);
  std::vector<Image> maps(4, Image(9, 13));
  for (auto& m : maps)
    for (auto& v : m.data) v = n(rng);
  write_displacement(maps, dir.str("out"), 1000.0, nlohmann::json::object(), true);

  DisplacementMeta meta;
  const std::vector<Image> back = read_displacement(dir.str("out"), &meta);
  CHECK(meta.frame_rate == 1000.0);
  REQUIRE(back.size() == maps.size());
  for (size_t i = 0; i < maps.size(); ++i)
    CHECK(std::memcmp(back[i].data.data(), maps[i].data.data(),
                      maps[i].data.size() * sizeof(float)) == 0);
}

TEST_CASE("pattern_path zero-pads to four digits") {
  CHECK(pattern_path("a/f_{index}.pgm", 7) == "a/f_0007.pgm");
  CHECK(pattern_path("f_{index}.png", 1234) == "f_1234.png");
}

TEST_CASE("non-finite displacement values are rejected") {
  testsup::TempDir dir("nfin");
  Image bad(3, 3, 0.0f);
  bad.data[4] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(
      write_displacement({bad}, dir.str("out"), 10.0, nlohmann::json::object()), Error);
}

TEST_CASE("file_crc32 changes when a file is tampered") {
  testsup::TempDir dir("crc");
  write_file_bytes(dir.str("a.bin"), "hello world", 11);
  const uint32_t before = file_crc32(dir.str("a.bin"));
  write_file_bytes(dir.str("a.bin"), "hello worle", 11);
  CHECK(file_crc32(dir.str("a.bin")) != before);
}
