#pragma once

// Per-second visual signals from a 1-FPS frame sequence: color-histogram
// emotion proxy, seeded-projection semantic stub, scene transitions, and
// the frame-difference beat vector.

#include <cstdint>
#include <vector>

#include "v2m/audio.hpp"

namespace v2m {

constexpr int kHistBins = 8;
constexpr int kEmotionDim = 3 * kHistBins;
constexpr int kSemanticDim = 64;
constexpr double kSceneThreshold = 27.0 / 255.0;

// 8-bit RGB image, row-major, 3 bytes per pixel
struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;
  Image() = default;
  Image(int w, int h)
      : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, 0) {}
  uint8_t& at(int y, int x, int c) {
    return rgb[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  uint8_t at(int y, int x, int c) const {
    return rgb[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
};

// one frame per second; all frames share one size of at least 16x16
struct FrameSequence {
  std::vector<Image> frames;
  int seconds() const { return static_cast<int>(frames.size()); }
};

struct VideoFeatures {
  Mat semantic;                // [M x dim], rows L2-normalized
  Mat emotional;               // [M x kEmotionDim]
  std::vector<uint8_t> scene;  // [M], entries in {0,1}, scene[0] == 0
  std::vector<double> beats;   // [M], non-negative
};

// per-channel marginal histograms, each normalized to sum 1, concatenated
std::vector<double> color_histogram(const Image& frame,
                                    int bins_per_channel = kHistBins);

// 16x16 grayscale box-downsample followed by a seeded gaussian random
// projection, L2-normalized; stands in for a learned embedder
std::vector<double> stub_semantic_embed(const Image& frame, int dim,
                                        uint64_t seed);

// e[m]=1 when the mean absolute HSV difference between downsampled frames
// m and m-1 exceeds the threshold; e[0]=0
std::vector<uint8_t> detect_scene_transitions(const FrameSequence& fs,
                                              double threshold = kSceneThreshold);

// mean absolute pixel difference between consecutive frames, max-normalized
std::vector<double> visual_rhythm_curve(const FrameSequence& fs);

// keep curve values only at local peaks (pre=post=1, delta=0.05, wait=1)
std::vector<double> visual_beats(const std::vector<double>& curve);

VideoFeatures extract_video_features(const FrameSequence& fs,
                                     int semantic_dim = kSemanticDim,
                                     uint64_t seed = 1234);

}  // namespace v2m
