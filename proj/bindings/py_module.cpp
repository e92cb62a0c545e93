// Python surface: numpy in, numpy out. Heavy state (models, checkpoints)
// stays on disk; the bindings wrap the file-level entry points plus the
// numeric primitives that are useful interactively.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>

#include "v2m/pipeline.hpp"
#include "v2m/selfcheck.hpp"

#define STRINGIFY(x) #x
#define MACRO_STRINGIFY(x) STRINGIFY(x)

namespace py = pybind11;
using namespace v2m;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8Array = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;

Waveform wav_from_array(const DArray& a) {
  if (a.ndim() != 1)
    throw std::runtime_error("audio: expected a 1-d sample array");
  Waveform w;
  w.samples.assign(a.data(), a.data() + a.shape(0));
  return w;
}

py::array_t<double> array_from_samples(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<double> array_from_mat(const Mat& m) {
  py::array_t<double> out({m.rows, m.cols});
  std::copy(m.v.begin(), m.v.end(), out.mutable_data());
  return out;
}

Mat mat_from_array(const DArray& a, const char* what) {
  if (a.ndim() != 2)
    throw std::runtime_error(std::string(what) + ": expected a 2-d array");
  Mat m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.v.begin());
  return m;
}

FrameSequence frames_from_array(const U8Array& a) {
  if (a.ndim() != 4 || a.shape(3) != 3)
    throw std::runtime_error("frames: expected a [frames, height, width, 3] uint8 array");
  FrameSequence fs;
  const int m = static_cast<int>(a.shape(0));
  const int h = static_cast<int>(a.shape(1));
  const int w = static_cast<int>(a.shape(2));
  const uint8_t* p = a.data();
  for (int i = 0; i < m; ++i) {
    Image img(w, h);
    std::copy(p, p + static_cast<size_t>(h) * w * 3, img.rgb.begin());
    p += static_cast<size_t>(h) * w * 3;
    fs.frames.push_back(std::move(img));
  }
  return fs;
}

py::array_t<uint8_t> array_from_frames(const FrameSequence& fs) {
  if (fs.frames.empty())
    return py::array_t<uint8_t>(std::vector<py::ssize_t>{0, 0, 0, 3});
  const int m = fs.seconds();
  const int h = fs.frames[0].height;
  const int w = fs.frames[0].width;
  py::array_t<uint8_t> out({m, h, w, 3});
  uint8_t* p = out.mutable_data();
  for (const Image& img : fs.frames) {
    std::copy(img.rgb.begin(), img.rgb.end(), p);
    p += img.rgb.size();
  }
  return out;
}

Config config_from_dict(const py::dict& d) {
  Config c;
  for (auto item : d)
    c.set(py::cast<std::string>(py::str(item.first)),
          py::cast<std::string>(py::str(item.second)));
  return c;
}

py::dict dict_from_feature_file(const FeatureFile& ff) {
  py::dict out;
  for (const NamedArray& s : ff.sections) {
    if (s.shape.size() == 2) {
      py::array_t<double> a({s.shape[0], s.shape[1]});
      std::copy(s.data.begin(), s.data.end(), a.mutable_data());
      out[s.name.c_str()] = a;
    } else {
      out[s.name.c_str()] = array_from_samples(s.data);
    }
  }
  return out;
}

py::dict dict_from_summary(const CheckSummary& s) {
  py::dict out;
  out["ok"] = s.all_ok;
  out["max_err"] = s.max_err;
  out["checks"] = static_cast<int>(s.results.size());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "video-conditioned music generation core";

  // audio features
  m.def(
      "onset_envelope",
      [](const DArray& samples) {
        OnsetCurve c = onset_envelope(wav_from_array(samples));
        return py::make_tuple(array_from_samples(c.values), c.frame_rate);
      },
      py::arg("samples"),
      "spectral-flux onset envelope; returns (values, frame_rate)");
  m.def(
      "stft",
      [](const DArray& samples) {
        return array_from_mat(stft_magnitude(wav_from_array(samples)));
      },
      py::arg("samples"), "STFT magnitudes, one row per frame");
  m.def(
      "mel",
      [](const DArray& samples) {
        return array_from_mat(mel_raw(stft_magnitude(wav_from_array(samples))));
      },
      py::arg("samples"), "mel band magnitudes, one row per frame");
  m.def(
      "rhythm_repr",
      [](const DArray& samples, const std::string& kind, int seconds) {
        return array_from_mat(
            rhythm_repr(wav_from_array(samples), rhythm_kind_from_name(kind), seconds)
                .values);
      },
      py::arg("samples"), py::arg("kind"), py::arg("seconds"),
      "low-resolution rhythm map: kind is 'odf', 'mel' or 'tempogram'");
  m.def(
      "alignment_score",
      [](const DArray& samples, const DArray& cond, const std::string& kind) {
        RhythmRepr r;
        r.kind = rhythm_kind_from_name(kind);
        r.values = mat_from_array(cond, "alignment");
        return rhythm_alignment_score(wav_from_array(samples), r);
      },
      py::arg("samples"), py::arg("cond"), py::arg("kind") = "odf",
      "Pearson correlation between audio onsets and a conditioning signal");

  // visual features
  m.def(
      "video_features",
      [](const U8Array& frames, int semantic_dim, uint64_t seed) {
        VideoFeatures vf =
            extract_video_features(frames_from_array(frames), semantic_dim, seed);
        py::dict out;
        out["semantic"] = array_from_mat(vf.semantic);
        out["emotional"] = array_from_mat(vf.emotional);
        out["scene"] = py::array_t<uint8_t>(
            static_cast<py::ssize_t>(vf.scene.size()), vf.scene.data());
        out["beats"] = array_from_samples(vf.beats);
        return out;
      },
      py::arg("frames"), py::arg("semantic_dim") = kSemanticDim,
      py::arg("seed") = 1234,
      "semantic, emotional, scene and beat features from [M,H,W,3] frames");
  m.def(
      "scene_transitions",
      [](const U8Array& frames) {
        std::vector<uint8_t> e = detect_scene_transitions(frames_from_array(frames));
        return py::array_t<uint8_t>(static_cast<py::ssize_t>(e.size()), e.data());
      },
      py::arg("frames"), "1 where a frame starts a new scene");

  // diffusion algebra
  m.def(
      "schedule",
      [](double t) {
        Schedule s = schedule(t);
        return py::make_tuple(s.alpha, s.sigma);
      },
      py::arg("t"), "noise schedule (alpha, sigma) at t in [0,1]");
  m.def(
      "p_pred",
      [](int epoch, int e1, int e2) { return p_pred(epoch, {e1, e2}); },
      py::arg("epoch"), py::arg("e1") = 10, py::arg("e2") = 30,
      "probability of conditioning on the predicted rhythm at this epoch");
  m.def(
      "cfg_combine",
      [](const DArray& cond, const DArray& uncond, double guidance_scale) {
        if (cond.ndim() != uncond.ndim() || cond.size() != uncond.size())
          throw std::runtime_error("cfg_combine: shape mismatch");
        py::array_t<double> out(
            std::vector<py::ssize_t>(cond.shape(), cond.shape() + cond.ndim()));
        const double* c = cond.data();
        const double* u = uncond.data();
        double* o = out.mutable_data();
        for (py::ssize_t i = 0; i < cond.size(); ++i)
          o[i] = u[i] + guidance_scale * (c[i] - u[i]);
        return out;
      },
      py::arg("cond"), py::arg("uncond"), py::arg("guidance_scale"),
      "classifier-free guidance combination");

  // latent codec
  m.def(
      "latent_encode",
      [](const DArray& samples) {
        LatentClip clip = latent_encode(wav_from_array(samples));
        py::dict out;
        py::array_t<double> z({clip.z.shape()[0], clip.z.shape()[1]});
        std::copy(clip.z.data().begin(), clip.z.data().end(), z.mutable_data());
        out["z"] = z;
        out["seconds"] = clip.seconds;
        out["orig_len"] = clip.orig_len;
        out["mean"] = clip.mean;
        out["stdev"] = clip.stdev;
        return out;
      },
      py::arg("samples"), "audio -> standardized latent frames");
  m.def(
      "latent_decode",
      [](const DArray& z, double seconds, int64_t orig_len, double mean,
         double stdev) {
        Mat zm = mat_from_array(z, "latent");
        LatentClip clip;
        clip.z = Tensor::leaf({zm.rows, zm.cols}, zm.v);
        clip.seconds = seconds;
        clip.orig_len = orig_len;
        clip.mean = mean;
        clip.stdev = stdev;
        return array_from_samples(latent_decode(clip).samples);
      },
      py::arg("z"), py::arg("seconds"), py::arg("orig_len"), py::arg("mean") = 0.0,
      py::arg("stdev") = 1.0, "latent frames -> audio samples");

  // wav io
  m.def(
      "read_wav",
      [](const std::string& path) { return array_from_samples(read_wav(path).samples); },
      py::arg("path"), "mono 16-bit 44.1 kHz WAV -> samples in [-1,1]");
  m.def(
      "write_wav",
      [](const std::string& path, const DArray& samples) {
        write_wav(path, wav_from_array(samples));
      },
      py::arg("path"), py::arg("samples"), "samples in [-1,1] -> mono 16-bit WAV");

  // synthetic paired data
  m.def(
      "synthetic_pair",
      [](int seconds, int n_events, uint64_t seed) {
        SyntheticPair p = generate_synthetic_pair(seconds, n_events, seed);
        py::dict out;
        out["frames"] = array_from_frames(p.frames);
        out["audio"] = array_from_samples(p.audio.samples);
        out["events"] = p.events;
        return out;
      },
      py::arg("seconds"), py::arg("n_events"), py::arg("seed"),
      "solid-color cut video plus click-aligned audio");
  m.def(
      "write_synthetic_clip",
      [](const std::string& dir, int seconds, int n_events, uint64_t seed) {
        write_synthetic_clip(generate_synthetic_pair(seconds, n_events, seed), dir);
      },
      py::arg("dir"), py::arg("seconds"), py::arg("n_events"), py::arg("seed"),
      "materialize frames/ and audio.wav for one synthetic pair");

  // pipeline entry points
  m.def(
      "extract_features",
      [](const std::string& frames_dir, const std::string& audio_path,
         const std::string& repr, int semantic_dim, uint64_t seed,
         const std::string& out_path) {
        FeatureFile ff = extract_features(frames_dir, audio_path,
                                          rhythm_kind_from_name(repr),
                                          semantic_dim, seed);
        if (!out_path.empty()) write_feature_file(out_path, ff);
        return dict_from_feature_file(ff);
      },
      py::arg("frames_dir"), py::arg("audio_path"), py::arg("repr") = "odf",
      py::arg("semantic_dim") = kSemanticDim, py::arg("seed") = 1234,
      py::arg("out_path") = "",
      "per-clip training features; optionally writes the feature file");
  m.def(
      "train",
      [](const py::dict& config, const std::string& data_dir,
         const std::string& ckpt_path, const std::string& csv_path,
         const std::string& resume_from) {
        TrainResult res = run_training(config_from_dict(config), data_dir,
                                       ckpt_path, csv_path, resume_from);
        py::list rows;
        for (const EpochRow& r : res.rows) {
          py::dict d;
          d["epoch"] = r.epoch;
          d["ldm_loss"] = r.ldm_loss;
          d["predictor_loss"] = r.pred_loss;
          d["p_pred"] = r.p_predicted;
          rows.append(d);
        }
        return rows;
      },
      py::arg("config"), py::arg("data_dir"), py::arg("ckpt_path"),
      py::arg("csv_path") = "", py::arg("resume_from") = "",
      "joint training over clip directories; returns per-epoch rows");
  m.def(
      "generate",
      [](const std::string& ckpt_path, const std::string& frames_dir,
         const std::string& wav_path, int steps, double guidance_scale,
         uint64_t seed, const std::string& report_path) {
        GenerateReport rep = run_generate(ckpt_path, frames_dir, wav_path, steps,
                                          guidance_scale, seed, report_path);
        py::dict out;
        out["seconds"] = rep.seconds;
        out["latent_frames"] = rep.latent_frames;
        out["steps"] = rep.steps;
        out["guidance_scale"] = rep.guidance_scale;
        out["seed"] = rep.seed;
        out["align_score"] = rep.align_score;
        out["wav_path"] = rep.wav_path;
        return out;
      },
      py::arg("ckpt_path"), py::arg("frames_dir"), py::arg("wav_path"),
      py::arg("steps") = 50, py::arg("guidance_scale") = 3.0,
      py::arg("seed") = 1234, py::arg("report_path") = "",
      "sample music for a clip from a trained checkpoint");
  m.def(
      "compare_rhythm",
      [](const py::dict& config, const std::string& data_dir,
         const std::string& csv_path) {
        run_compare(config_from_dict(config), data_dir, csv_path);
      },
      py::arg("config"), py::arg("data_dir"), py::arg("csv_path"),
      "train one model per rhythm representation and tabulate scores");

  // diagnostics
  m.def(
      "gradient_battery", [] { return dict_from_summary(gradient_battery(false)); },
      "finite-difference check of every op and the full model");
  m.def("self_test", [] { return dict_from_summary(self_test(false)); },
        "quick numeric identities");

  m.attr("SAMPLE_RATE") = kSampleRate;
  m.attr("LATENT_WIDTH") = kLatentWidth;
  m.attr("LATENT_FPS") = kLatentFps;
#ifdef VERSION_INFO
  m.attr("__version__") = MACRO_STRINGIFY(VERSION_INFO);
#else
  m.attr("__version__") = "dev";
#endif
}
