#include "v2m/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "v2m/rng.hpp"

namespace v2m {

namespace {

constexpr int kFrameSize = 24;

Image solid_frame(uint8_t r, uint8_t g, uint8_t b) {
  Image img(kFrameSize, kFrameSize);
  for (size_t i = 0; i < img.rgb.size(); i += 3) {
    img.rgb[i] = r;
    img.rgb[i + 1] = g;
    img.rgb[i + 2] = b;
  }
  return img;
}

// pick a color whose cut from the previous frame is loud enough for the
// scene detector; a blind uniform draw can land on a near-identical color
std::array<uint8_t, 3> next_color(const std::array<uint8_t, 3>& prev, Rng& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::array<uint8_t, 3> cand = {static_cast<uint8_t>(rng.below(256)),
                                   static_cast<uint8_t>(rng.below(256)),
                                   static_cast<uint8_t>(rng.below(256))};
    FrameSequence probe;
    probe.frames.push_back(solid_frame(prev[0], prev[1], prev[2]));
    probe.frames.push_back(solid_frame(cand[0], cand[1], cand[2]));
    if (detect_scene_transitions(probe)[1] == 1) return cand;
  }
  throw std::runtime_error("synthetic pair: no detectable cut color after 100 tries");
}

}  // namespace

SyntheticPair generate_synthetic_pair(int seconds, int n_events, uint64_t seed) {
  if (seconds < 3) {
    throw std::runtime_error("synthetic pair: need at least 3 seconds, got " +
                             std::to_string(seconds));
  }
  if (n_events < 2 || n_events >= seconds) {
    throw std::runtime_error("synthetic pair: need 2 <= events < seconds, got " +
                             std::to_string(n_events) + " events for " +
                             std::to_string(seconds) + " seconds");
  }

  Rng rng(seed);

  // events without replacement from [1, seconds-1], partial Fisher-Yates
  std::vector<int> pool;
  for (int s = 1; s < seconds; ++s) pool.push_back(s);
  for (int i = 0; i < n_events; ++i) {
    int j = i + static_cast<int>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<int> events(pool.begin(), pool.begin() + n_events);
  std::sort(events.begin(), events.end());

  SyntheticPair pair;
  pair.seconds = seconds;
  pair.events = events;

  std::array<uint8_t, 3> color = {static_cast<uint8_t>(rng.below(256)),
                                  static_cast<uint8_t>(rng.below(256)),
                                  static_cast<uint8_t>(rng.below(256))};
  size_t next_event = 0;
  for (int s = 0; s < seconds; ++s) {
    if (next_event < events.size() && events[next_event] == s) {
      color = next_color(color, rng);
      ++next_event;
    }
    pair.frames.frames.push_back(solid_frame(color[0], color[1], color[2]));
  }

  // 440 Hz bed at -20 dBFS with short fades, so the only onsets are the clicks
  const int sr = kSampleRate;
  const size_t n = static_cast<size_t>(seconds) * sr;
  pair.audio.sample_rate = sr;
  pair.audio.samples.assign(n, 0.0);
  const size_t fade = sr / 10;
  for (size_t k = 0; k < n; ++k) {
    double amp = 0.1;
    if (k < fade) amp *= static_cast<double>(k) / fade;
    if (n - 1 - k < fade) amp *= static_cast<double>(n - 1 - k) / fade;
    pair.audio.samples[k] = amp * std::sin(2.0 * M_PI * 440.0 * k / sr);
  }
  for (int ev : events) {
    size_t start = static_cast<size_t>(ev) * sr;
    for (size_t k = 0; k < 550 && start + k < n; ++k) {
      pair.audio.samples[start + k] +=
          0.9 * std::exp(-static_cast<double>(k) / 110.0) *
          std::sin(2.0 * M_PI * 2500.0 * k / sr);
    }
  }
  for (double& s : pair.audio.samples) s = std::clamp(s, -1.0, 1.0);

  return pair;
}

}  // namespace v2m
