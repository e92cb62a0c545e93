#pragma once

// Paired toy clips: solid-color frames that cut at chosen seconds, and a
// sine bed with clicks at exactly those seconds. Visual beats and audio
// onsets coincide by construction, which makes alignment testable without
// real data.

#include <cstdint>
#include <vector>

#include "v2m/audio.hpp"
#include "v2m/visual.hpp"

namespace v2m {

struct SyntheticPair {
  FrameSequence frames;     // one frame per second
  Waveform audio;
  int seconds = 0;
  std::vector<int> events;  // cut seconds, sorted, within [1, seconds-1]
};

SyntheticPair generate_synthetic_pair(int seconds, int n_events, uint64_t seed);

}  // namespace v2m
