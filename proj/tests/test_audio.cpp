#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "v2m/audio.hpp"
#include "v2m/rng.hpp"

using namespace v2m;

namespace {

constexpr double kTau = 6.28318530717958647692;

Waveform silence(double seconds) {
  Waveform w;
  w.samples.assign(static_cast<size_t>(seconds * kSampleRate), 0.0);
  return w;
}

Waveform sine_wave(double hz, double seconds, double amp) {
  Waveform w;
  const size_t n = static_cast<size_t>(seconds * kSampleRate);
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    w.samples[i] = amp * std::sin(kTau * hz * static_cast<double>(i) / kSampleRate);
  return w;
}

// short decaying 2.5 kHz bursts at the given times, silence elsewhere
Waveform click_train(double seconds, const std::vector<double>& times) {
  Waveform w = silence(seconds);
  for (double t : times) {
    const size_t s0 = static_cast<size_t>(std::llround(t * kSampleRate));
    for (size_t k = 0; k < 550 && s0 + k < w.samples.size(); ++k)
      w.samples[s0 + k] +=
          0.9 * std::exp(-static_cast<double>(k) / 110.0) *
          std::sin(kTau * 2500.0 * static_cast<double>(k) / kSampleRate);
  }
  return w;
}

int argmax_row(const Mat& m, int r) {
  int best = 0;
  for (int c = 1; c < m.cols; ++c)
    if (m.at(r, c) > m.at(r, best)) best = c;
  return best;
}

// which mel band has its center frequency nearest the tone, from the HTK
// formulas alone
int nearest_center_band(double hz, int n_mels) {
  auto hz_to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto mel_to_hz = [](double m) {
    return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
  };
  const double mel_max = hz_to_mel(kSampleRate / 2.0);
  int best = -1;
  double best_d = 1e300;
  for (int m = 0; m < n_mels; ++m) {
    const double center = mel_to_hz(mel_max * (m + 1) / (n_mels + 1));
    const double d = std::fabs(center - hz);
    if (d < best_d) {
      best_d = d;
      best = m;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("stft frame count, zeros on silence, input validation") {
  Mat spec = stft_magnitude(silence(1.0));
  CHECK(spec.rows == 1 + (44100 - 2048) / 512);
  CHECK(spec.cols == 1025);
  for (double x : spec.v) CHECK(x == 0.0);

  Waveform tiny;
  tiny.samples.assign(999, 0.0);
  CHECK_THROWS_WITH_AS(stft_magnitude(tiny),
                       doctest::Contains("999"), std::runtime_error);
  CHECK_THROWS_WITH_AS(stft_magnitude(silence(1.0), 1000, 512),
                       doctest::Contains("power of two"), std::runtime_error);
  CHECK_THROWS_AS(stft_magnitude(silence(1.0), 2048, 0), std::runtime_error);
  CHECK_THROWS_AS(stft_magnitude(silence(1.0), 2048, 4096), std::runtime_error);
}

TEST_CASE("stft localizes a pure tone in the expected bin") {
  Mat spec = stft_magnitude(sine_wave(440.0, 1.0, 0.5));
  const int expected = static_cast<int>(std::llround(440.0 * 2048 / 44100.0));
  CHECK(expected == 20);
  CHECK(argmax_row(spec, spec.rows / 2) == expected);
  CHECK(argmax_row(spec, 5) == expected);
}

TEST_CASE("stft of an impulse at the frame center is flat across bins") {
  Waveform w;
  w.samples.assign(2048, 0.0);
  w.samples[1024] = 1.0;
  Mat spec = stft_magnitude(w);
  CHECK(spec.rows == 1);
  double lo = spec.v[0], hi = spec.v[0];
  for (double x : spec.v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  CHECK(lo > 0.0);
  CHECK(hi / lo <= 1.1);
  for (double x : spec.v) CHECK(std::fabs(x - 1.0) <= 0.1);
}

TEST_CASE("mel filterbank puts a tone in the nearest-center band") {
  Mat spec = stft_magnitude(sine_wave(440.0, 1.0, 0.5));
  Mat mel = mel_raw(spec, kMelBands);
  CHECK(mel.cols == kMelBands);
  CHECK(mel.rows == spec.rows);
  CHECK(argmax_row(mel, mel.rows / 2) == nearest_center_band(440.0, kMelBands));

  Mat quiet = mel_raw(stft_magnitude(silence(1.0)), kMelBands);
  for (double x : quiet.v) CHECK(x == 0.0);

  Rng rng(7);
  Waveform noise;
  noise.samples.resize(44100);
  for (double& s : noise.samples) s = rng.uniform(-0.5, 0.5);
  Mat noisy = mel_raw(stft_magnitude(noise), kMelBands);
  double total = 0.0;
  for (double x : noisy.v) total += x;
  CHECK(total > 0.0);

  CHECK_THROWS_WITH_AS(mel_raw(spec, 15), doctest::Contains("at least 16"),
                       std::runtime_error);
  Mat narrow(3, 17);
  CHECK_THROWS_WITH_AS(mel_raw(narrow, 18), doctest::Contains("exceed"),
                       std::runtime_error);
}

TEST_CASE("norm_resize box shrink, bilinear grow, degenerate rules") {
  Mat board(4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) board.at(r, c) = (r + c) % 2;
  Mat half = norm_resize(board, 2, 2);
  for (double x : half.v) CHECK(x == doctest::Approx(0.5).epsilon(1e-12));

  Mat lane(1, 2);
  lane.at(0, 0) = 0.0;
  lane.at(0, 1) = 1.0;
  Mat wide = norm_resize(lane, 1, 4);
  CHECK(wide.at(0, 0) == doctest::Approx(0.0));
  CHECK(wide.at(0, 1) == doctest::Approx(0.25));
  CHECK(wide.at(0, 2) == doctest::Approx(0.75));
  CHECK(wide.at(0, 3) == doctest::Approx(1.0));

  // same-size input containing 0 and 1 passes through untouched
  Mat id(2, 2);
  id.at(0, 0) = 0.0;
  id.at(0, 1) = 1.0;
  id.at(1, 0) = 1.0;
  id.at(1, 1) = 0.0;
  Mat same = norm_resize(id, 2, 2);
  for (size_t i = 0; i < id.v.size(); ++i) CHECK(same.v[i] == id.v[i]);

  Mat flat(3, 3);
  for (double& x : flat.v) x = 4.2;
  Mat zeroed = norm_resize(flat, 2, 5);
  for (double x : zeroed.v) CHECK(x == 0.0);

  // applying again at the same size changes nothing
  Rng rng(11);
  Mat rnd(4, 3);
  for (double& x : rnd.v) x = rng.uniform(-3.0, 5.0);
  Mat once = norm_resize(rnd, 4, 3);
  Mat twice = norm_resize(once, 4, 3);
  for (size_t i = 0; i < once.v.size(); ++i)
    CHECK(std::fabs(twice.v[i] - once.v[i]) < 1e-6);

  Mat big(7, 5);
  for (double& x : big.v) x = rng.uniform(-1.0, 9.0);
  Mat shrunk = norm_resize(big, 3, 4);
  for (double x : shrunk.v) {
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }

  CHECK_THROWS_WITH_AS(norm_resize(Mat(), 2, 2), doctest::Contains("empty"),
                       std::runtime_error);
  CHECK_THROWS_AS(norm_resize(big, 0, 3), std::runtime_error);
}

TEST_CASE("onset envelope marks clicks and stays quiet on a steady tone") {
  OnsetCurve quiet = onset_envelope(silence(2.0));
  for (double x : quiet.values) CHECK(x == 0.0);

  const std::vector<double> times = {0.5, 1.0, 1.5};
  OnsetCurve env = onset_envelope(click_train(2.0, times));
  CHECK(env.values[0] == 0.0);
  for (double t : times) {
    // frame whose window center sits on the click
    const int e = static_cast<int>(std::llround((t * kSampleRate - 1024) / 512.0));
    int best = e - 3;
    for (int f = e - 3; f <= e + 3; ++f)
      if (env.values[f] > env.values[best]) best = f;
    CHECK(std::abs(best - e) <= 1);
    CHECK(env.values[best] > 0.0);
  }

  // abrupt sine start: one onset burst, then near-zero flux
  Waveform w = silence(0.5);
  Waveform tone = sine_wave(440.0, 1.5, 0.5);
  w.samples.insert(w.samples.end(), tone.samples.begin(), tone.samples.end());
  OnsetCurve oc = onset_envelope(w);
  double peak = 0.0, tail = 0.0;
  for (double x : oc.values) peak = std::max(peak, x);
  for (size_t f = 50; f < oc.values.size(); ++f) tail = std::max(tail, oc.values[f]);
  CHECK(tail < 0.05 * peak);
}

TEST_CASE("onset envelope shifts with a silence prefix") {
  Waveform sig = click_train(1.0, {0.3, 0.7});
  const int prefix_frames = 30;
  Waveform padded;
  padded.samples.assign(static_cast<size_t>(prefix_frames) * kHop, 0.0);
  padded.samples.insert(padded.samples.end(), sig.samples.begin(), sig.samples.end());

  OnsetCurve a = onset_envelope(sig);
  OnsetCurve b = onset_envelope(padded);
  for (size_t j = 1; j < a.values.size(); ++j)
    CHECK(std::fabs(b.values[prefix_frames + j] - a.values[j]) < 1e-9);
  // frames entirely inside the prefix stay silent
  for (int f = 0; f < prefix_frames - 4; ++f) CHECK(b.values[f] == 0.0);
}

TEST_CASE("pick_peaks window, mean and refractory rules") {
  OnsetCurve c;
  c.frame_rate = 1.0;
  c.values = {0.0, 1.0, 0.0};
  PeakList p = pick_peaks(c, 1, 1, 0.0, 1);
  REQUIRE(p.peaks.size() == 1);
  CHECK(p.peaks[0].time_seconds == doctest::Approx(1.0));
  CHECK(p.peaks[0].strength == doctest::Approx(1.0));

  c.values = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  p = pick_peaks(c, 1, 1, 0.0, 1);
  REQUIRE(p.peaks.size() == 1);
  CHECK(p.peaks[0].time_seconds == doctest::Approx(9.0));

  c.values = {5.0, 5.0, 5.0, 5.0, 5.0};
  p = pick_peaks(c, 1, 1, 0.0, 1);
  CHECK(p.peaks.empty());

  c.values = {0.0, 1.0, 1.0, 0.0};
  p = pick_peaks(c, 1, 1, 0.0, 5);
  REQUIRE(p.peaks.size() == 1);
  CHECK(p.peaks[0].time_seconds == doctest::Approx(1.0));

  CHECK_THROWS_WITH_AS(pick_peaks(c, 0, 1, 0.0, 1),
                       doctest::Contains("at least 1"), std::runtime_error);
  CHECK_THROWS_WITH_AS(pick_peaks(c, 1, 1, -0.5, 1),
                       doctest::Contains("non-negative"), std::runtime_error);
}

TEST_CASE("odf_lr nearest-second mapping with max aggregation") {
  PeakList p;
  p.peaks = {{1.2, 0.8}, {3.7, 0.5}};
  RhythmRepr r = odf_lr(p, 5);
  CHECK(r.values.rows == 5);
  CHECK(r.values.cols == 1);
  CHECK(r.values.at(0, 0) == 0.0);
  CHECK(r.values.at(1, 0) == doctest::Approx(1.0));
  CHECK(r.values.at(2, 0) == 0.0);
  CHECK(r.values.at(3, 0) == 0.0);
  CHECK(r.values.at(4, 0) == doctest::Approx(0.5 / 0.8));

  // two peaks in the same second keep the stronger one
  p.peaks = {{2.1, 0.3}, {2.4, 0.9}};
  r = odf_lr(p, 4);
  CHECK(r.values.at(2, 0) == doctest::Approx(1.0));
  CHECK(r.values.at(0, 0) == 0.0);
  CHECK(r.values.at(1, 0) == 0.0);
  CHECK(r.values.at(3, 0) == 0.0);

  // order of the peak list does not matter
  PeakList fwd, rev;
  fwd.peaks = {{0.4, 0.2}, {2.2, 0.7}, {4.4, 0.4}};
  rev.peaks = {{4.4, 0.4}, {2.2, 0.7}, {0.4, 0.2}};
  RhythmRepr a = odf_lr(fwd, 5), b = odf_lr(rev, 5);
  for (size_t i = 0; i < a.values.v.size(); ++i) CHECK(a.values.v[i] == b.values.v[i]);

  PeakList empty;
  r = odf_lr(empty, 3);
  for (double x : r.values.v) CHECK(x == 0.0);

  // rounding up past the last second clamps into the final row
  PeakList edge;
  edge.peaks = {{4.9, 1.0}};
  r = odf_lr(edge, 5);
  CHECK(r.values.at(4, 0) == doctest::Approx(1.0));

  PeakList far;
  far.peaks = {{5.5, 0.1}};
  CHECK_THROWS_WITH_AS(odf_lr(far, 5), doctest::Contains("outside"),
                       std::runtime_error);
}

TEST_CASE("second-level onset map recovers synthesized event seconds") {
  const std::vector<double> events = {1.0, 3.0, 4.0};
  Waveform w = click_train(6.0, events);
  RhythmRepr r = odf_lr_from_audio(w, 6);
  REQUIRE(r.values.rows == 6);
  CHECK(r.values.at(0, 0) == 0.0);
  CHECK(r.values.at(1, 0) > 0.5);
  CHECK(r.values.at(2, 0) == 0.0);
  CHECK(r.values.at(3, 0) > 0.5);
  CHECK(r.values.at(4, 0) > 0.5);
  CHECK(r.values.at(5, 0) == 0.0);
  double mx = 0.0;
  for (double x : r.values.v) mx = std::max(mx, x);
  CHECK(mx == doctest::Approx(1.0));

  // brute-force re-derivation of the default chain
  OnsetCurve env = onset_envelope(w);
  double emax = 0.0;
  for (double x : env.values) emax = std::max(emax, x);
  const int wait = static_cast<int>(std::llround(0.1 * env.frame_rate));
  PeakList peaks = pick_peaks(env, 3, 3, 0.07 * emax, wait);
  std::vector<double> manual(6, 0.0);
  for (const Peak& pk : peaks.peaks) {
    int m = std::clamp(static_cast<int>(std::llround(pk.time_seconds)), 0, 5);
    manual[m] = std::max(manual[m], pk.strength);
  }
  double lo = manual[0], hi = manual[0];
  for (double x : manual) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  for (double& x : manual) x = (x - lo) / (hi - lo);
  for (int m = 0; m < 6; ++m)
    CHECK(r.values.at(m, 0) == doctest::Approx(manual[m]).epsilon(1e-12));
}

TEST_CASE("tempogram finds the click tempo and halves under 2x stretch") {
  std::vector<double> fast, slow;
  for (double t = 0.5; t < 9.9; t += 0.5) fast.push_back(t);
  for (double t = 0.5; t < 9.9; t += 1.0) slow.push_back(t);

  OnsetCurve env_fast = onset_envelope(click_train(10.0, fast));
  OnsetCurve env_slow = onset_envelope(click_train(10.0, slow));
  Mat tg_fast = tempogram_raw(env_fast);
  Mat tg_slow = tempogram_raw(env_slow);
  for (double x : tg_fast.v) CHECK(x >= 0.0);

  const int b_fast = argmax_row(tg_fast, tg_fast.rows / 2);
  const int b_slow = argmax_row(tg_slow, tg_slow.rows / 2);

  // fold octave errors into [80, 160) and compare against 120 BPM
  double bpm = tempo_bin_bpm(b_fast);
  while (bpm < 80.0) bpm *= 2.0;
  while (bpm >= 160.0) bpm /= 2.0;
  CHECK(std::fabs(bpm - 120.0) <= 6.0);

  // half tempo = one octave lower on the log-spaced axis
  const int octave_bins =
      static_cast<int>(std::llround((kTempoBins - 1) * std::log10(2.0)));
  CHECK(std::abs((b_fast - b_slow) - octave_bins) <= 1);

  OnsetCurve flat;
  flat.values.assign(700, 0.0);
  Mat tg0 = tempogram_raw(flat);
  for (double x : tg0.v) CHECK(x == 0.0);

  OnsetCurve shorty;
  shorty.values.assign(100, 0.0);
  CHECK_THROWS_WITH_AS(tempogram_raw(shorty), doctest::Contains("shorter"),
                       std::runtime_error);
}

TEST_CASE("rhythm representations have M rows, bounded entries, stable names") {
  std::vector<double> times;
  for (double t = 0.5; t < 9.9; t += 0.5) times.push_back(t);
  Waveform w = click_train(10.0, times);

  for (RhythmKind k : {RhythmKind::OdfLR, RhythmKind::MelLR, RhythmKind::TemLR}) {
    RhythmRepr r = rhythm_repr(w, k, 10);
    CHECK(r.kind == k);
    CHECK(r.values.rows == 10);
    CHECK(r.values.cols == rhythm_width(k));
    for (double x : r.values.v) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
    CHECK(rhythm_kind_from_name(rhythm_kind_name(k)) == k);
  }
  CHECK(rhythm_width(RhythmKind::OdfLR) == 1);
  CHECK(rhythm_width(RhythmKind::MelLR) == 16);
  CHECK_THROWS_WITH_AS(rhythm_kind_from_name("wavelet"),
                       doctest::Contains("odf|mel|tempogram"),
                       std::runtime_error);
}
