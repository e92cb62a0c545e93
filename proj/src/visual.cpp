#include "v2m/visual.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "v2m/rng.hpp"

namespace v2m {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

void validate_sequence(const FrameSequence& fs, int min_frames) {
  check(fs.seconds() >= min_frames,
        "frame sequence has " + std::to_string(fs.seconds()) +
            " frames, need at least " + std::to_string(min_frames));
  const Image& first = fs.frames[0];
  check(first.width >= 16 && first.height >= 16,
        "frames must be at least 16x16, got " + std::to_string(first.width) +
            "x" + std::to_string(first.height));
  for (const Image& f : fs.frames)
    check(f.width == first.width && f.height == first.height,
          "frame sizes differ: " + std::to_string(first.width) + "x" +
              std::to_string(first.height) + " vs " + std::to_string(f.width) +
              "x" + std::to_string(f.height));
}

// box-average one channel down to out x out (input is never smaller than out)
std::vector<double> box_downsample(const std::vector<double>& src, int w, int h,
                                   int out) {
  auto shrink_axis = [](const std::vector<double>& in, int rows, int cols,
                        int out_rows) {
    std::vector<double> res(static_cast<size_t>(out_rows) * cols, 0.0);
    const double ratio = static_cast<double>(rows) / out_rows;
    for (int j = 0; j < out_rows; ++j) {
      const double lo = j * ratio;
      const double hi = (j + 1) * ratio;
      double pos = lo;
      int k = static_cast<int>(std::floor(lo));
      while (pos < hi - 1e-12) {
        const double next = std::min(hi, std::floor(pos + 1.0 + 1e-12));
        const int row = std::min(k, rows - 1);
        for (int c = 0; c < cols; ++c)
          res[static_cast<size_t>(j) * cols + c] +=
              in[static_cast<size_t>(row) * cols + c] * (next - pos);
        pos = next;
        ++k;
      }
      for (int c = 0; c < cols; ++c) res[static_cast<size_t>(j) * cols + c] /= ratio;
    }
    return res;
  };
  std::vector<double> rows_done = shrink_axis(src, h, w, out);
  // transpose, shrink the other axis, transpose back
  std::vector<double> t(static_cast<size_t>(w) * out);
  for (int r = 0; r < out; ++r)
    for (int c = 0; c < w; ++c)
      t[static_cast<size_t>(c) * out + r] = rows_done[static_cast<size_t>(r) * w + c];
  std::vector<double> cols_done = shrink_axis(t, w, out, out);
  std::vector<double> final(static_cast<size_t>(out) * out);
  for (int r = 0; r < out; ++r)
    for (int c = 0; c < out; ++c)
      final[static_cast<size_t>(r) * out + c] = cols_done[static_cast<size_t>(c) * out + r];
  return final;
}

struct Hsv {
  double h, s, v;
};

Hsv hsv_of(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  Hsv out{0.0, 0.0, mx};
  if (mx > 0.0) out.s = d / mx;
  if (d > 0.0) {
    double h;
    if (mx == r)
      h = std::fmod((g - b) / d, 6.0);
    else if (mx == g)
      h = (b - r) / d + 2.0;
    else
      h = (r - g) / d + 4.0;
    if (h < 0.0) h += 6.0;
    out.h = h / 6.0;
  }
  return out;
}

// 16x16 per-channel box reduction of an RGB frame, values in [0,1]
std::array<std::vector<double>, 3> small_rgb(const Image& f) {
  std::array<std::vector<double>, 3> chans;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> plane(static_cast<size_t>(f.width) * f.height);
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x)
        plane[static_cast<size_t>(y) * f.width + x] = f.at(y, x, c) / 255.0;
    chans[c] = box_downsample(plane, f.width, f.height, 16);
  }
  return chans;
}

}  // namespace

std::vector<double> color_histogram(const Image& frame, int bins_per_channel) {
  check(frame.width > 0 && frame.height > 0, "color_histogram: empty image");
  check(bins_per_channel >= 2, "color_histogram: need at least 2 bins, got " +
                                   std::to_string(bins_per_channel));
  const int bins = bins_per_channel;
  std::vector<double> out(static_cast<size_t>(3) * bins, 0.0);
  const double npix = static_cast<double>(frame.width) * frame.height;
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const int b = std::min(frame.at(y, x, c) * bins / 256, bins - 1);
        out[static_cast<size_t>(c) * bins + b] += 1.0;
      }
  for (double& x : out) x /= npix;
  return out;
}

std::vector<double> stub_semantic_embed(const Image& frame, int dim,
                                        uint64_t seed) {
  check(frame.width >= 16 && frame.height >= 16,
        "semantic embed: frame must be at least 16x16, got " +
            std::to_string(frame.width) + "x" + std::to_string(frame.height));
  check(dim >= 8, "semantic embed: dim must be at least 8, got " +
                      std::to_string(dim));
  std::vector<double> gray(static_cast<size_t>(frame.width) * frame.height);
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x)
      gray[static_cast<size_t>(y) * frame.width + x] =
          (frame.at(y, x, 0) + frame.at(y, x, 1) + frame.at(y, x, 2)) /
          (3.0 * 255.0);
  std::vector<double> small = box_downsample(gray, frame.width, frame.height, 16);

  // fixed projection: the generator depends only on (seed, dim)
  Rng rng(seed);
  std::vector<double> out(dim, 0.0);
  for (int p = 0; p < 256; ++p)
    for (int d = 0; d < dim; ++d) out[d] += small[p] * rng.gaussian();
  double norm = 0.0;
  for (double x : out) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 1e-12)
    for (double& x : out) x /= norm;
  return out;
}

std::vector<uint8_t> detect_scene_transitions(const FrameSequence& fs,
                                              double threshold) {
  check(threshold > 0.0, "scene detection: threshold must be positive");
  validate_sequence(fs, 1);
  const int m_total = fs.seconds();
  std::vector<uint8_t> e(m_total, 0);

  std::array<std::vector<double>, 3> prev = small_rgb(fs.frames[0]);
  for (int m = 1; m < m_total; ++m) {
    std::array<std::vector<double>, 3> cur = small_rgb(fs.frames[m]);
    double diff = 0.0;
    for (size_t p = 0; p < cur[0].size(); ++p) {
      const Hsv a = hsv_of(prev[0][p], prev[1][p], prev[2][p]);
      const Hsv b = hsv_of(cur[0][p], cur[1][p], cur[2][p]);
      diff += (std::fabs(a.h - b.h) + std::fabs(a.s - b.s) +
               std::fabs(a.v - b.v)) /
              3.0;
    }
    diff /= static_cast<double>(cur[0].size());
    e[m] = diff > threshold ? 1 : 0;
    prev = std::move(cur);
  }
  return e;
}

std::vector<double> visual_rhythm_curve(const FrameSequence& fs) {
  validate_sequence(fs, 2);
  const int m_total = fs.seconds();
  std::vector<double> curve(m_total, 0.0);
  for (int m = 1; m < m_total; ++m) {
    const Image& a = fs.frames[m - 1];
    const Image& b = fs.frames[m];
    double acc = 0.0;
    for (size_t i = 0; i < a.rgb.size(); ++i)
      acc += std::fabs(static_cast<double>(a.rgb[i]) - b.rgb[i]);
    curve[m] = acc / (255.0 * static_cast<double>(a.rgb.size()));
  }
  double mx = 0.0;
  for (double x : curve) mx = std::max(mx, x);
  if (mx > 0.0)
    for (double& x : curve) x /= mx;
  return curve;
}

std::vector<double> visual_beats(const std::vector<double>& curve) {
  OnsetCurve c;
  c.values = curve;
  c.frame_rate = 1.0;
  PeakList peaks = pick_peaks(c, 1, 1, 0.05, 1);
  std::vector<double> v(curve.size(), 0.0);
  for (const Peak& p : peaks.peaks) {
    const int m = static_cast<int>(std::llround(p.time_seconds));
    v[m] = p.strength;
  }
  return v;
}

VideoFeatures extract_video_features(const FrameSequence& fs, int semantic_dim,
                                     uint64_t seed) {
  validate_sequence(fs, 2);
  const int m_total = fs.seconds();
  VideoFeatures out;
  out.semantic = Mat(m_total, semantic_dim);
  out.emotional = Mat(m_total, kEmotionDim);
  for (int m = 0; m < m_total; ++m) {
    std::vector<double> s = stub_semantic_embed(fs.frames[m], semantic_dim, seed);
    std::vector<double> h = color_histogram(fs.frames[m], kHistBins);
    std::copy(s.begin(), s.end(), out.semantic.v.begin() + static_cast<size_t>(m) * semantic_dim);
    std::copy(h.begin(), h.end(), out.emotional.v.begin() + static_cast<size_t>(m) * kEmotionDim);
  }
  out.scene = detect_scene_transitions(fs);
  out.beats = visual_beats(visual_rhythm_curve(fs));
  return out;
}

}  // namespace v2m
