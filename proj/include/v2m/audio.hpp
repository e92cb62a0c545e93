#pragma once

// Audio analysis: STFT, log-mel, onset detection, and the three rhythm
// representations (low-res onset map, low-res mel, low-res tempogram).

#include <string>
#include <vector>

namespace v2m {

constexpr int kSampleRate = 44100;
constexpr int kNFft = 2048;
constexpr int kHop = 512;
constexpr int kMelBands = 64;
constexpr int kTempoBins = 64;
constexpr double kTempoMinBpm = 30.0;
constexpr double kTempoMaxBpm = 300.0;
constexpr double kTempoWinSeconds = 8.0;

// dense row-major matrix of doubles
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;
  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;
  double seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

struct OnsetCurve {
  std::vector<double> values;   // one per STFT frame, non-negative
  double frame_rate = static_cast<double>(kSampleRate) / kHop;
};

struct Peak {
  double time_seconds = 0.0;
  double strength = 0.0;
};

struct PeakList {
  std::vector<Peak> peaks;
};

enum class RhythmKind { OdfLR, MelLR, TemLR };

const char* rhythm_kind_name(RhythmKind k);
RhythmKind rhythm_kind_from_name(const std::string& name);
int rhythm_width(RhythmKind k);  // 1 for OdfLR, 16 otherwise

struct RhythmRepr {
  RhythmKind kind = RhythmKind::OdfLR;
  Mat values;  // [M x rhythm_width(kind)], entries in [0,1]
};

// magnitude spectrogram, frames = 1 + floor((len - n_fft)/hop), Hann window
Mat stft_magnitude(const Waveform& w, int n_fft = kNFft, int hop = kHop);

// triangular HTK-mel filterbank applied to a magnitude spectrogram,
// log(1 + energy) compressed
Mat mel_raw(const Mat& spec, int n_mels = kMelBands);

// per-matrix min-max to [0,1] (constant maps to zeros), then resize:
// box averaging when shrinking, bilinear when growing
Mat norm_resize(const Mat& m, int out_rows, int out_cols);

// spectral flux of the log-mel spectrogram; first frame is 0
OnsetCurve onset_envelope(const Waveform& w);

// local-max peaks: c[i] == max over [i-pre, i+post], c[i] > window mean +
// delta, at least `wait` frames after the previous accepted peak
PeakList pick_peaks(const OnsetCurve& c, int pre, int post, double delta,
                    int wait);

// nearest-second onset map: one row per second, max peak strength per
// second, min-max normalized (all-zero stays zero)
RhythmRepr odf_lr(const PeakList& p, int seconds);

// windowed autocorrelation tempogram over log-spaced tempo bins 30-300 BPM
Mat tempogram_raw(const OnsetCurve& c, double win_seconds = kTempoWinSeconds);

double tempo_bin_bpm(int bin);

// full chains from raw audio
RhythmRepr odf_lr_from_audio(const Waveform& w, int seconds);
RhythmRepr mel_lr(const Waveform& w, int seconds);
RhythmRepr tem_lr(const Waveform& w, int seconds);
RhythmRepr rhythm_repr(const Waveform& w, RhythmKind kind, int seconds);

}  // namespace v2m
