#pragma once

// On-disk formats: WAV PCM16 mono, P6 PPM frames, the binary feature and
// checkpoint containers, RFC-4180 CSV, and flat key=value configs.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "v2m/audio.hpp"
#include "v2m/visual.hpp"

namespace v2m {

Waveform read_wav(const std::string& path);
// samples are clamped to [-1, 1] and quantized to 16-bit
void write_wav(const std::string& path, const Waveform& w);

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// frames named frame_00000.ppm, frame_00001.ppm, ... one per second
FrameSequence read_frame_dir(const std::string& dir);
void write_frame_dir(const std::string& dir, const FrameSequence& fs);

struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;
};

// feature container: named f32 sections
struct FeatureFile {
  std::vector<NamedArray> sections;
  const NamedArray* find(const std::string& name) const;
  const NamedArray& require(const std::string& name) const;
};

void write_feature_file(const std::string& path, const FeatureFile& ff);
FeatureFile read_feature_file(const std::string& path);

// checkpoint container: config snapshot, counters, rng state, f64 parameters
struct Checkpoint {
  std::string config_text;
  uint8_t strategy_kind = 0;
  uint32_t epoch = 0;
  uint64_t opt_step = 0;
  std::array<uint64_t, 4> rng_state{};
  std::vector<NamedArray> params;
};

void write_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::string& path);

std::string csv_escape(const std::string& field);
void write_csv(const std::string& path,
               const std::vector<std::vector<std::string>>& rows);

// flat key=value settings; '#' lines are comments; order preserved
struct Config {
  std::vector<std::pair<std::string, std::string>> entries;
  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::string text() const;
  // throws listing every key not in `known`
  void reject_unknown(const std::vector<std::string>& known) const;
};

Config parse_config_text(const std::string& text);
Config load_config(const std::string& path);

}  // namespace v2m
