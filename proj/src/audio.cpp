#include "v2m/audio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

namespace v2m {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

// iterative radix-2 FFT, in place
void fft(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// resample a strided lane of length src_n to dst_n: box averaging when
// shrinking, bilinear with half-pixel centers when growing
void resample_lane(const double* src, int64_t src_stride, int src_n, double* dst,
                   int64_t dst_stride, int dst_n) {
  if (dst_n == src_n) {
    for (int i = 0; i < src_n; ++i) dst[i * dst_stride] = src[i * src_stride];
    return;
  }
  if (dst_n < src_n) {
    const double ratio = static_cast<double>(src_n) / dst_n;
    for (int j = 0; j < dst_n; ++j) {
      const double lo = j * ratio;
      const double hi = (j + 1) * ratio;
      double acc = 0.0;
      int k = static_cast<int>(std::floor(lo));
      double pos = lo;
      while (pos < hi - 1e-12) {
        const double next = std::min(hi, std::floor(pos + 1.0 + 1e-12));
        acc += src[std::min(k, src_n - 1) * src_stride] * (next - pos);
        pos = next;
        ++k;
      }
      dst[j * dst_stride] = acc / ratio;
    }
    return;
  }
  for (int j = 0; j < dst_n; ++j) {
    double pos = (j + 0.5) * static_cast<double>(src_n) / dst_n - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(src_n - 1));
    const int i0 = static_cast<int>(std::floor(pos));
    const int i1 = std::min(i0 + 1, src_n - 1);
    const double frac = pos - i0;
    dst[j * dst_stride] = src[i0 * src_stride] * (1.0 - frac) + src[i1 * src_stride] * frac;
  }
}

}  // namespace

Mat stft_magnitude(const Waveform& w, int n_fft, int hop) {
  check(n_fft > 0 && (n_fft & (n_fft - 1)) == 0,
        "stft: n_fft must be a power of two, got " + std::to_string(n_fft));
  check(hop > 0 && hop <= n_fft, "stft: hop " + std::to_string(hop) +
                                     " outside (0, " + std::to_string(n_fft) + "]");
  check(static_cast<int64_t>(w.samples.size()) >= n_fft,
        "stft: audio has " + std::to_string(w.samples.size()) +
            " samples, shorter than one " + std::to_string(n_fft) +
            "-sample frame");
  const int frames = 1 + static_cast<int>((w.samples.size() - n_fft) / hop);
  const int bins = n_fft / 2 + 1;

  std::vector<double> window(n_fft);
  for (int n = 0; n < n_fft; ++n)
    window[n] = 0.5 * (1.0 - std::cos(2.0 * kPi * n / n_fft));

  Mat out(frames, bins);
  std::vector<std::complex<double>> buf(n_fft);
  for (int f = 0; f < frames; ++f) {
    const int64_t start = static_cast<int64_t>(f) * hop;
    for (int n = 0; n < n_fft; ++n)
      buf[n] = std::complex<double>(w.samples[start + n] * window[n], 0.0);
    fft(buf);
    for (int b = 0; b < bins; ++b) out.at(f, b) = std::abs(buf[b]);
  }
  return out;
}

Mat mel_raw(const Mat& spec, int n_mels) {
  check(n_mels >= 16, "mel: need at least 16 bands, got " + std::to_string(n_mels));
  check(n_mels <= spec.cols, "mel: " + std::to_string(n_mels) +
                                 " bands exceed the " + std::to_string(spec.cols) +
                                 " spectrum bins");
  const int bins = spec.cols;
  const int n_fft = 2 * (bins - 1);
  const double fmax = kSampleRate / 2.0;

  // filter edges evenly spaced on the mel scale between 0 and fmax
  std::vector<double> edges(n_mels + 2);
  const double mel_max = hz_to_mel(fmax);
  for (int i = 0; i < n_mels + 2; ++i) edges[i] = mel_to_hz(mel_max * i / (n_mels + 1));

  Mat fb(n_mels, bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    for (int b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * kSampleRate / n_fft;
      double weight = 0.0;
      if (f > lo && f < center)
        weight = (f - lo) / (center - lo);
      else if (f >= center && f < hi)
        weight = (hi - f) / (hi - center);
      fb.at(m, b) = weight;
    }
  }

  Mat out(spec.rows, n_mels);
  for (int f = 0; f < spec.rows; ++f)
    for (int m = 0; m < n_mels; ++m) {
      double e = 0.0;
      for (int b = 0; b < bins; ++b) e += fb.at(m, b) * spec.at(f, b);
      out.at(f, m) = std::log1p(e);
    }
  return out;
}

Mat norm_resize(const Mat& m, int out_rows, int out_cols) {
  check(m.rows > 0 && m.cols > 0, "norm_resize: empty input matrix");
  check(out_rows > 0 && out_cols > 0, "norm_resize: target " +
                                          std::to_string(out_rows) + "x" +
                                          std::to_string(out_cols) + " is empty");
  double lo = m.v[0], hi = m.v[0];
  for (double x : m.v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  Mat normed(m.rows, m.cols);
  if (hi - lo > 1e-12)
    for (size_t i = 0; i < m.v.size(); ++i) normed.v[i] = (m.v[i] - lo) / (hi - lo);
  // constant input stays all zeros

  // rows first, then columns
  Mat mid(out_rows, m.cols);
  for (int c = 0; c < m.cols; ++c)
    resample_lane(normed.v.data() + c, m.cols, m.rows, mid.v.data() + c, m.cols,
                  out_rows);
  Mat out(out_rows, out_cols);
  for (int r = 0; r < out_rows; ++r)
    resample_lane(mid.v.data() + static_cast<int64_t>(r) * m.cols, 1, m.cols,
                  out.v.data() + static_cast<int64_t>(r) * out_cols, 1, out_cols);
  return out;
}

OnsetCurve onset_envelope(const Waveform& w) {
  Mat mel = mel_raw(stft_magnitude(w), kMelBands);
  OnsetCurve c;
  c.frame_rate = static_cast<double>(w.sample_rate) / kHop;
  c.values.assign(mel.rows, 0.0);
  for (int f = 1; f < mel.rows; ++f) {
    double flux = 0.0;
    for (int b = 0; b < mel.cols; ++b) {
      const double d = mel.at(f, b) - mel.at(f - 1, b);
      if (d > 0.0) flux += d;
    }
    c.values[f] = flux;
  }
  return c;
}

PeakList pick_peaks(const OnsetCurve& c, int pre, int post, double delta,
                    int wait) {
  check(pre >= 1 && post >= 1 && wait >= 1,
        "pick_peaks: pre, post and wait must each be at least 1");
  check(delta >= 0.0, "pick_peaks: delta must be non-negative");
  const int n = static_cast<int>(c.values.size());
  PeakList out;
  int last = -1;
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - pre);
    const int hi = std::min(n - 1, i + post);
    double mx = c.values[lo], mean = 0.0;
    for (int j = lo; j <= hi; ++j) {
      mx = std::max(mx, c.values[j]);
      mean += c.values[j];
    }
    mean /= (hi - lo + 1);
    if (c.values[i] < mx) continue;
    // strict: a flat window is not a peak
    if (!(c.values[i] > mean + delta)) continue;
    if (last >= 0 && i - last < wait) continue;
    out.peaks.push_back({i / c.frame_rate, c.values[i]});
    last = i;
  }
  return out;
}

const char* rhythm_kind_name(RhythmKind k) {
  switch (k) {
    case RhythmKind::OdfLR: return "odf";
    case RhythmKind::MelLR: return "mel";
    case RhythmKind::TemLR: return "tempogram";
  }
  return "?";
}

RhythmKind rhythm_kind_from_name(const std::string& name) {
  if (name == "odf") return RhythmKind::OdfLR;
  if (name == "mel") return RhythmKind::MelLR;
  if (name == "tempogram") return RhythmKind::TemLR;
  throw std::runtime_error("rhythm representation '" + name +
                           "' not one of odf|mel|tempogram");
}

int rhythm_width(RhythmKind k) { return k == RhythmKind::OdfLR ? 1 : 16; }

RhythmRepr odf_lr(const PeakList& p, int seconds) {
  check(seconds >= 1, "odf_lr: map must span at least one second");
  RhythmRepr out;
  out.kind = RhythmKind::OdfLR;
  out.values = Mat(seconds, 1);
  for (const Peak& pk : p.peaks) {
    check(pk.time_seconds < seconds + 0.5,
          "odf_lr: peak at " + std::to_string(pk.time_seconds) +
              " s lies outside the " + std::to_string(seconds) + "-second map");
    int m = static_cast<int>(std::llround(pk.time_seconds));
    m = std::clamp(m, 0, seconds - 1);
    out.values.at(m, 0) = std::max(out.values.at(m, 0), pk.strength);
  }
  double lo = out.values.v[0], hi = out.values.v[0];
  for (double x : out.values.v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (hi - lo > 1e-12)
    for (double& x : out.values.v) x = (x - lo) / (hi - lo);
  else
    for (double& x : out.values.v) x = 0.0;
  return out;
}

double tempo_bin_bpm(int bin) {
  return kTempoMinBpm * std::pow(kTempoMaxBpm / kTempoMinBpm,
                                 static_cast<double>(bin) / (kTempoBins - 1));
}

Mat tempogram_raw(const OnsetCurve& c, double win_seconds) {
  const int n = static_cast<int>(c.values.size());
  const int win = static_cast<int>(std::llround(win_seconds * c.frame_rate));
  check(n >= win, "tempogram: onset curve has " + std::to_string(n) +
                      " frames, shorter than the " + std::to_string(win) +
                      "-frame window");

  std::vector<int> lags(kTempoBins);
  for (int b = 0; b < kTempoBins; ++b) {
    int lag = static_cast<int>(std::llround(c.frame_rate * 60.0 / tempo_bin_bpm(b)));
    lags[b] = std::min(lag, win - 1);
  }

  Mat out(n, kTempoBins);
  for (int m = 0; m < n; ++m) {
    const int lo = std::max(0, m - win / 2);
    const int hi = std::min(n, lo + win);
    for (int b = 0; b < kTempoBins; ++b) {
      const int lag = lags[b];
      double ac = 0.0;
      for (int i = lo; i + lag < hi; ++i) ac += c.values[i] * c.values[i + lag];
      out.at(m, b) = ac;
    }
  }
  return out;
}

RhythmRepr odf_lr_from_audio(const Waveform& w, int seconds) {
  OnsetCurve env = onset_envelope(w);
  double mx = 0.0;
  for (double e : env.values) mx = std::max(mx, e);
  const double delta = 0.07 * mx;
  const int wait = std::max(1, static_cast<int>(std::llround(0.1 * env.frame_rate)));
  return odf_lr(pick_peaks(env, 3, 3, delta, wait), seconds);
}

RhythmRepr mel_lr(const Waveform& w, int seconds) {
  check(seconds >= 1, "mel_lr: map must span at least one second");
  RhythmRepr out;
  out.kind = RhythmKind::MelLR;
  out.values = norm_resize(mel_raw(stft_magnitude(w), kMelBands), seconds, 16);
  return out;
}

RhythmRepr tem_lr(const Waveform& w, int seconds) {
  check(seconds >= 1, "tem_lr: map must span at least one second");
  RhythmRepr out;
  out.kind = RhythmKind::TemLR;
  out.values = norm_resize(tempogram_raw(onset_envelope(w)), seconds, 16);
  return out;
}

RhythmRepr rhythm_repr(const Waveform& w, RhythmKind kind, int seconds) {
  switch (kind) {
    case RhythmKind::OdfLR: return odf_lr_from_audio(w, seconds);
    case RhythmKind::MelLR: return mel_lr(w, seconds);
    case RhythmKind::TemLR: return tem_lr(w, seconds);
  }
  throw std::runtime_error("rhythm_repr: unknown kind");
}

}  // namespace v2m
