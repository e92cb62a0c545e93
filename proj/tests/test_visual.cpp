#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "v2m/rng.hpp"
#include "v2m/visual.hpp"

using namespace v2m;

namespace {

Image solid(int w, int h, uint8_t r, uint8_t g, uint8_t b) {
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = r;
      img.at(y, x, 1) = g;
      img.at(y, x, 2) = b;
    }
  return img;
}

Image random_frame(int w, int h, uint64_t seed) {
  Image img(w, h);
  Rng rng(seed);
  for (uint8_t& v : img.rgb) v = static_cast<uint8_t>(50 + rng.below(150));
  return img;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

}  // namespace

TEST_CASE("color histogram bins solid and split frames correctly") {
  std::vector<double> red = color_histogram(solid(16, 16, 255, 0, 0), 8);
  REQUIRE(red.size() == 24);
  CHECK(red[7] == doctest::Approx(1.0));
  CHECK(red[8] == doctest::Approx(1.0));   // G channel, bin 0
  CHECK(red[16] == doctest::Approx(1.0));  // B channel, bin 0
  for (int i = 0; i < 7; ++i) CHECK(red[i] == 0.0);

  // left half black, right half white
  Image split(32, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 16; x < 32; ++x)
      for (int c = 0; c < 3; ++c) split.at(y, x, c) = 255;
  std::vector<double> h = color_histogram(split, 8);
  for (int c = 0; c < 3; ++c) {
    CHECK(h[c * 8 + 0] == doctest::Approx(0.5));
    CHECK(h[c * 8 + 7] == doctest::Approx(0.5));
    for (int b = 1; b < 7; ++b) CHECK(h[c * 8 + b] == 0.0);
  }

  // each channel block is a distribution
  std::vector<double> r = color_histogram(random_frame(20, 17, 3), 8);
  for (int c = 0; c < 3; ++c) {
    double total = 0.0;
    for (int b = 0; b < 8; ++b) total += r[c * 8 + b];
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }

  CHECK_THROWS_WITH_AS(color_histogram(Image(), 8), doctest::Contains("empty"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(color_histogram(solid(16, 16, 0, 0, 0), 1),
                       doctest::Contains("at least 2"), std::runtime_error);
}

TEST_CASE("semantic embedding is deterministic, unit-norm, locally smooth") {
  Image f = random_frame(33, 21, 9);
  std::vector<double> a = stub_semantic_embed(f, 64, 42);
  std::vector<double> b = stub_semantic_embed(f, 64, 42);
  REQUIRE(a.size() == 64);
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);

  double norm = 0.0;
  for (double x : a) norm += x * x;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-5));

  Image g = f;
  g.at(10, 10, 1) = static_cast<uint8_t>(g.at(10, 10, 1) + 1);
  CHECK(cosine(a, stub_semantic_embed(g, 64, 42)) > 0.99);

  // a different seed projects elsewhere
  std::vector<double> other = stub_semantic_embed(f, 64, 43);
  CHECK(cosine(a, other) < 0.999);

  CHECK_THROWS_WITH_AS(stub_semantic_embed(f, 4, 42),
                       doctest::Contains("at least 8"), std::runtime_error);
}

TEST_CASE("scene transitions fire on color cuts") {
  FrameSequence still;
  for (int i = 0; i < 5; ++i) still.frames.push_back(solid(16, 16, 80, 90, 100));
  std::vector<uint8_t> e = detect_scene_transitions(still);
  for (uint8_t x : e) CHECK(x == 0);

  FrameSequence cut;
  for (int i = 0; i < 3; ++i) cut.frames.push_back(solid(16, 16, 0, 0, 0));
  for (int i = 0; i < 3; ++i) cut.frames.push_back(solid(16, 16, 255, 0, 0));
  e = detect_scene_transitions(cut);
  std::vector<uint8_t> want = {0, 0, 0, 1, 0, 0};
  REQUIRE(e.size() == want.size());
  for (size_t i = 0; i < e.size(); ++i) CHECK(e[i] == want[i]);

  FrameSequence strobe;
  for (int i = 0; i < 6; ++i)
    strobe.frames.push_back(i % 2 == 0 ? solid(16, 16, 0, 0, 0)
                                       : solid(16, 16, 255, 255, 255));
  e = detect_scene_transitions(strobe);
  CHECK(e[0] == 0);
  for (size_t i = 1; i < e.size(); ++i) CHECK(e[i] == 1);

  CHECK_THROWS_WITH_AS(detect_scene_transitions(still, 0.0),
                       doctest::Contains("positive"), std::runtime_error);
}

TEST_CASE("rhythm curve normalizes frame differences") {
  FrameSequence still;
  for (int i = 0; i < 4; ++i) still.frames.push_back(solid(16, 16, 7, 7, 7));
  std::vector<double> c = visual_rhythm_curve(still);
  for (double x : c) CHECK(x == 0.0);

  FrameSequence cut;
  for (int i = 0; i < 3; ++i) cut.frames.push_back(solid(16, 16, 10, 10, 10));
  for (int i = 0; i < 3; ++i) cut.frames.push_back(solid(16, 16, 200, 200, 200));
  c = visual_rhythm_curve(cut);
  CHECK(c[3] == doctest::Approx(1.0));
  for (int m : {0, 1, 2, 4, 5}) CHECK(c[m] == 0.0);

  // linear fade: every step the same, so the plateau is flat
  FrameSequence fade;
  for (int i = 0; i < 6; ++i) {
    const uint8_t v = static_cast<uint8_t>(i * 20);
    fade.frames.push_back(solid(16, 16, v, v, v));
  }
  c = visual_rhythm_curve(fade);
  CHECK(c[0] == 0.0);
  for (int m = 1; m < 6; ++m) CHECK(c[m] == doctest::Approx(c[1]).epsilon(1e-6));

  FrameSequence one;
  one.frames.push_back(solid(16, 16, 0, 0, 0));
  CHECK_THROWS_WITH_AS(visual_rhythm_curve(one), doctest::Contains("at least 2"),
                       std::runtime_error);

  FrameSequence uneven;
  uneven.frames.push_back(solid(16, 16, 0, 0, 0));
  uneven.frames.push_back(solid(20, 16, 0, 0, 0));
  CHECK_THROWS_WITH_AS(visual_rhythm_curve(uneven), doctest::Contains("differ"),
                       std::runtime_error);
}

TEST_CASE("visual beats keep curve values only at local peaks") {
  std::vector<double> v = visual_beats({0.0, 0.2, 1.0, 0.2, 0.0});
  std::vector<double> want = {0.0, 0.0, 1.0, 0.0, 0.0};
  REQUIRE(v.size() == want.size());
  for (size_t i = 0; i < v.size(); ++i) CHECK(v[i] == doctest::Approx(want[i]));

  // monotone curve has no interior local maximum
  v = visual_beats({0.0, 0.25, 0.5, 0.75, 1.0});
  for (size_t i = 0; i + 1 < v.size(); ++i) CHECK(v[i] == 0.0);

  v = visual_beats({0.0, 1.0, 0.0, 0.9, 0.0});
  CHECK(v[1] == doctest::Approx(1.0));
  CHECK(v[3] == doctest::Approx(0.9));
  CHECK(v[0] + v[2] + v[4] == 0.0);
}

TEST_CASE("solid-color scene cuts line up across detectors") {
  FrameSequence fs;
  for (int i = 0; i < 3; ++i) fs.frames.push_back(solid(16, 16, 255, 0, 0));
  for (int i = 0; i < 2; ++i) fs.frames.push_back(solid(16, 16, 0, 0, 255));
  for (int i = 0; i < 3; ++i) fs.frames.push_back(solid(16, 16, 0, 255, 0));

  std::vector<uint8_t> e = detect_scene_transitions(fs);
  std::vector<double> beats = visual_beats(visual_rhythm_curve(fs));
  REQUIRE(e.size() == 8);
  REQUIRE(beats.size() == 8);
  for (int m = 0; m < 8; ++m) {
    const bool is_cut = (m == 3 || m == 5);
    CHECK(e[m] == (is_cut ? 1 : 0));
    CHECK((beats[m] > 0.0) == is_cut);
  }
}

TEST_CASE("feature extraction bundles all per-second signals") {
  FrameSequence fs;
  for (int i = 0; i < 5; ++i) fs.frames.push_back(random_frame(24, 18, 100 + i));
  VideoFeatures vf = extract_video_features(fs, 32, 7);
  CHECK(vf.semantic.rows == 5);
  CHECK(vf.semantic.cols == 32);
  CHECK(vf.emotional.rows == 5);
  CHECK(vf.emotional.cols == 24);
  CHECK(vf.scene.size() == 5);
  CHECK(vf.beats.size() == 5);
  CHECK(vf.scene[0] == 0);
  for (uint8_t s : vf.scene) CHECK((s == 0 || s == 1));
  for (double b : vf.beats) CHECK(b >= 0.0);
  for (int m = 0; m < 5; ++m) {
    double norm = 0.0;
    for (int d = 0; d < 32; ++d) norm += vf.semantic.at(m, d) * vf.semantic.at(m, d);
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-5));
  }
}
