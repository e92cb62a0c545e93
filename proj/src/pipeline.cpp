#include "v2m/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>

namespace v2m {

namespace {

namespace fs = std::filesystem;

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void round_f32(std::vector<double>& v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      "seed",          "epochs",         "d_model",        "n_blocks",
      "n_heads",       "ffn_mult",       "strategy",       "t0",
      "cond_drop_prob", "lr",            "weight_decay",   "lambda",
      "e1",            "e2",             "rhythm_repr",    "save_interval",
      "sample_steps",  "guidance_scale", "semantic_dim",   "pred_d_model",
      "pred_layers",   "pred_heads",     "max_frames",     "max_latent_frames"};
  return keys;
}

// user keys override defaults; unknown keys are a hard error
Config resolve_config(const Config& user) {
  user.reject_unknown(known_config_keys());
  Config full = default_train_config();
  for (const auto& [k, v] : user.entries) full.set(k, v);
  return full;
}

std::vector<std::string> list_clip_dirs(const std::string& data_dir) {
  if (!fs::is_directory(data_dir))
    throw std::runtime_error("dataset: '" + data_dir + "' is not a directory");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(data_dir)) {
    if (!e.is_directory()) continue;
    if (fs::exists(e.path() / "audio.wav") && fs::is_directory(e.path() / "frames"))
      out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct ClipData {
  std::string dir;
  int seconds = 0;
  TrainBatch batch;
};

ClipData load_clip(const std::string& dir, RhythmKind kind, int semantic_dim,
                   uint64_t seed) {
  const std::string frames_dir = (fs::path(dir) / "frames").string();
  const std::string audio_path = (fs::path(dir) / "audio.wav").string();
  const std::string sidecar =
      (fs::path(dir) / ("features_" + std::string(rhythm_kind_name(kind)) + ".v2mf"))
          .string();

  FeatureFile ff = fs::exists(sidecar)
                       ? read_feature_file(sidecar)
                       : extract_features(frames_dir, audio_path, kind,
                                          semantic_dim, seed);
  Waveform w = read_wav(audio_path);

  const NamedArray& sem = ff.require("semantic");
  const NamedArray& emo = ff.require("emotional");
  const NamedArray& scene = ff.require("scene");
  const NamedArray& beats = ff.require("beats");
  const NamedArray& rhy = ff.require("rhythm_gt");

  const int m = sem.shape.at(0);
  const int m_audio = static_cast<int>(std::floor(w.seconds()));
  if (m != m_audio)
    throw std::runtime_error("clip '" + dir + "': features cover " +
                             std::to_string(m) + " seconds but audio covers " +
                             std::to_string(m_audio));
  if (sem.shape.at(1) != semantic_dim)
    throw std::runtime_error("clip '" + dir + "': semantic width " +
                             std::to_string(sem.shape.at(1)) +
                             " does not match configured " +
                             std::to_string(semantic_dim));
  if (rhy.shape.at(1) != rhythm_width(kind))
    throw std::runtime_error("clip '" + dir + "': rhythm_gt width " +
                             std::to_string(rhy.shape.at(1)) + " but '" +
                             rhythm_kind_name(kind) + "' needs " +
                             std::to_string(rhythm_width(kind)));

  ClipData c;
  c.dir = dir;
  c.seconds = m;
  c.batch.emo_raw = Tensor::leaf(Shape{m, emo.shape.at(1)}, emo.data);
  c.batch.sem_raw = Tensor::leaf(Shape{m, sem.shape.at(1)}, sem.data);
  c.batch.rhy_gt = Tensor::leaf(Shape{m, rhy.shape.at(1)}, rhy.data);
  c.batch.scene.reserve(m);
  for (double s : scene.data) c.batch.scene.push_back(s != 0.0 ? 1 : 0);
  c.batch.curve = beats.data;
  c.batch.z0 = latent_encode(w).z;
  c.batch.g_start = 0.0;
  c.batch.g_dur = m;
  return c;
}

std::vector<ClipData> load_clips(const std::vector<std::string>& dirs,
                                 RhythmKind kind, int semantic_dim,
                                 uint64_t seed) {
  std::vector<ClipData> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(load_clip(d, kind, semantic_dim, seed));
  return out;
}

Checkpoint make_checkpoint(const Config& cfg, const ModelBundle& mb,
                           const AdamW& opt, const Rng& rng, int epoch) {
  Checkpoint ck;
  ck.config_text = cfg.text();
  ck.strategy_kind = static_cast<uint8_t>(mb.gen_cfg.strategy.kind);
  ck.epoch = static_cast<uint32_t>(epoch);
  ck.opt_step = opt.step;
  ck.rng_state = rng.state();
  for (const auto& [name, t] : mb.reg.items)
    ck.params.push_back({name, t.shape(), t.data()});
  for (size_t i = 0; i < mb.reg.items.size(); ++i)
    ck.params.push_back({"adam.m." + mb.reg.items[i].first,
                         mb.reg.items[i].second.shape(), opt.m[i]});
  for (size_t i = 0; i < mb.reg.items.size(); ++i)
    ck.params.push_back({"adam.v." + mb.reg.items[i].first,
                         mb.reg.items[i].second.shape(), opt.v[i]});
  return ck;
}

const NamedArray& require_param(const Checkpoint& ck, const std::string& name) {
  for (const auto& a : ck.params)
    if (a.name == name) return a;
  throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
}

// restores model weights, and optionally optimizer moments and rng state
void load_checkpoint_state(const Checkpoint& ck, ModelBundle& mb, AdamW* opt,
                           Rng* rng) {
  for (auto& [name, t] : mb.reg.items) {
    const NamedArray& a = require_param(ck, name);
    if (a.shape != t.shape())
      throw std::runtime_error("checkpoint: parameter '" + name + "' has shape " +
                               shape_str(a.shape) + " but the model expects " +
                               shape_str(t.shape()));
    t.data() = a.data;
  }
  if (opt) {
    opt->init(mb.reg);
    for (size_t i = 0; i < mb.reg.items.size(); ++i) {
      opt->m[i] = require_param(ck, "adam.m." + mb.reg.items[i].first).data;
      opt->v[i] = require_param(ck, "adam.v." + mb.reg.items[i].first).data;
    }
    opt->step = ck.opt_step;
  }
  if (rng) rng->set_state(ck.rng_state);
}

void check_strategy_byte(const Checkpoint& ck, const Config& cfg) {
  const std::string name = cfg.get_string("strategy", "additive");
  if (ck.strategy_kind != static_cast<uint8_t>(fusion_kind_from_name(name)))
    throw std::runtime_error("checkpoint: strategy byte " +
                             std::to_string(static_cast<int>(ck.strategy_kind)) +
                             " does not match config strategy '" + name + "'");
}

struct LoopResult {
  std::vector<EpochRow> rows;
  uint64_t steps = 0;
};

LoopResult train_loop(const Config& cfg, std::vector<ClipData>& clips,
                      ModelBundle& mb, AdamW& opt, Rng& rng, int start_epoch,
                      const std::function<void(int)>& on_epoch_done = {}) {
  const int epochs = static_cast<int>(cfg.get_int("epochs", 50));
  const ScheduleParams sp{static_cast<int>(cfg.get_int("e1", 10)),
                          static_cast<int>(cfg.get_int("e2", 30))};
  const double lambda = cfg.get_double("lambda", 1.0);

  LoopResult res;
  for (int e = start_epoch; e < epochs; ++e) {
    double ldm = 0.0, pl = 0.0;
    for (auto& c : clips) {
      StepStats st = training_step(*mb.gen, *mb.pred, mb.reg, opt, c.batch, e,
                                   rng, sp, lambda);
      ldm += st.ldm_loss;
      pl += st.pred_loss;
      ++res.steps;
    }
    const double n = static_cast<double>(clips.size());
    res.rows.push_back({e, ldm / n, pl / n, p_pred(e, sp)});
    if (on_epoch_done) on_epoch_done(e + 1);
  }
  return res;
}

struct GenCore {
  Waveform wav;   // peak-normalized, ready to write
  Mat rhythm_hat; // [M x width], predictor output
};

// predicts the rhythm, samples latents with guidance, decodes to audio
GenCore generate_core(const ModelBundle& mb, const Tensor& emo_raw,
                      const Tensor& sem_raw, const std::vector<int>& scene,
                      const std::vector<double>& curve, int seconds, int steps,
                      double guidance, uint64_t seed) {
  const int m = sem_raw.shape()[0];
  Tensor rhy_pred = (*mb.pred)(sem_raw, scene, curve);
  Tensor rhy_leaf = Tensor::leaf(rhy_pred.shape(), rhy_pred.data());

  const double dur = seconds;
  VModel cond = [&](const Tensor& z_t, double t) {
    ConditionSet cs = mb.gen->encode_conditions(emo_raw, sem_raw, rhy_leaf, t,
                                                0.0, dur);
    return mb.gen->forward(z_t, cs, t);
  };
  VModel uncond = [&](const Tensor& z_t, double t) {
    return mb.gen->forward(z_t, mb.gen->null_conditions(t, 0.0, dur), t);
  };

  const int t_rows = kLatentFps * seconds;
  Tensor z0 = ddim_sample(cond, uncond, t_rows, mb.gen_cfg.d_lat, steps,
                          guidance, seed);

  LatentClip clip;
  clip.z = Tensor::leaf(z0.shape(), z0.data());
  clip.seconds = seconds;
  clip.orig_len = static_cast<int64_t>(t_rows) * mb.gen_cfg.d_lat;

  GenCore out;
  out.wav = latent_decode(clip);
  double peak = 0.0;
  for (double s : out.wav.samples) peak = std::max(peak, std::fabs(s));
  if (peak > 1e-12) {
    const double target = std::pow(10.0, -1.0 / 20.0);
    for (double& s : out.wav.samples) s *= target / peak;
  }
  out.rhythm_hat = Mat(m, rhy_pred.shape()[1]);
  out.rhythm_hat.v = rhy_pred.data();
  return out;
}

}  // namespace

FeatureFile extract_features(const std::string& frames_dir,
                             const std::string& audio_path, RhythmKind kind,
                             int semantic_dim, uint64_t seed) {
  FrameSequence frames = read_frame_dir(frames_dir);
  Waveform w = read_wav(audio_path);
  const int m = frames.seconds();
  const int m_audio = static_cast<int>(std::floor(w.seconds()));
  if (m != m_audio)
    throw std::runtime_error("extract: " + std::to_string(m) +
                             " frames but audio covers " +
                             std::to_string(m_audio) + " seconds");

  VideoFeatures vf = extract_video_features(frames, semantic_dim, seed);
  RhythmRepr rr = rhythm_repr(w, kind, m);

  FeatureFile ff;
  ff.sections.push_back({"semantic", {m, semantic_dim}, vf.semantic.v});
  ff.sections.push_back({"emotional", {m, kEmotionDim}, vf.emotional.v});
  ff.sections.push_back(
      {"scene", {m}, std::vector<double>(vf.scene.begin(), vf.scene.end())});
  ff.sections.push_back({"beats", {m}, vf.beats});
  ff.sections.push_back({"rhythm_gt", {m, rr.values.cols}, rr.values.v});
  for (auto& s : ff.sections) round_f32(s.data);
  return ff;
}

double rhythm_alignment_score(const Waveform& w, const RhythmRepr& cond) {
  const int m = cond.values.rows;
  const int m_audio = static_cast<int>(std::floor(w.seconds()));
  if (m != m_audio)
    throw std::runtime_error("alignment: rhythm covers " + std::to_string(m) +
                             " seconds but audio covers " +
                             std::to_string(m_audio));

  RhythmRepr ref = odf_lr_from_audio(w, m);
  std::vector<double> a(m), b(m);
  for (int i = 0; i < m; ++i) a[i] = ref.values.at(i, 0);
  if (cond.values.cols == 1) {
    for (int i = 0; i < m; ++i) b[i] = cond.values.at(i, 0);
  } else {
    // collapse multi-band conditioning to an energy profile per second
    for (int i = 0; i < m; ++i) {
      double s = 0.0;
      for (int j = 0; j < cond.values.cols; ++j) s += cond.values.at(i, j);
      b[i] = s / cond.values.cols;
    }
    double lo = *std::min_element(b.begin(), b.end());
    double hi = *std::max_element(b.begin(), b.end());
    if (hi > lo)
      for (double& x : b) x = (x - lo) / (hi - lo);
  }

  double ma = 0.0, mb = 0.0;
  for (int i = 0; i < m; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= m;
  mb /= m;
  double sa = 0.0, sb = 0.0, sab = 0.0;
  for (int i = 0; i < m; ++i) {
    sa += (a[i] - ma) * (a[i] - ma);
    sb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  if (sa < 1e-24 || sb < 1e-24) return 0.0;
  return sab / std::sqrt(sa * sb);
}

void write_synthetic_clip(const SyntheticPair& pair, const std::string& dir) {
  fs::create_directories(dir);
  write_frame_dir((fs::path(dir) / "frames").string(), pair.frames);
  write_wav((fs::path(dir) / "audio.wav").string(), pair.audio);
}

Config default_train_config() {
  Config c;
  c.set("seed", "1234");
  c.set("epochs", "50");
  c.set("d_model", "64");
  c.set("n_blocks", "2");
  c.set("n_heads", "4");
  c.set("ffn_mult", "4");
  c.set("strategy", "additive");
  c.set("t0", "0.2");
  c.set("cond_drop_prob", "0.1");
  c.set("lr", "0.0001");
  c.set("weight_decay", "0.001");
  c.set("lambda", "1");
  c.set("e1", "10");
  c.set("e2", "30");
  c.set("rhythm_repr", "odf");
  c.set("save_interval", "0");
  c.set("sample_steps", "50");
  c.set("guidance_scale", "3");
  c.set("semantic_dim", "64");
  c.set("pred_d_model", "64");
  c.set("pred_layers", "2");
  c.set("pred_heads", "4");
  c.set("max_frames", "30");
  c.set("max_latent_frames", "64");
  return c;
}

ModelBundle build_models(const Config& cfg, Rng& rng) {
  ModelBundle mb;
  mb.rhythm = rhythm_kind_from_name(cfg.get_string("rhythm_repr", "odf"));
  const int width = rhythm_width(mb.rhythm);

  GeneratorConfig g;
  g.d_model = static_cast<int>(cfg.get_int("d_model", 64));
  g.n_blocks = static_cast<int>(cfg.get_int("n_blocks", 2));
  g.n_heads = static_cast<int>(cfg.get_int("n_heads", 4));
  g.ffn_mult = static_cast<int>(cfg.get_int("ffn_mult", 4));
  g.d_lat = kLatentWidth;
  g.emo_dim = kEmotionDim;
  g.sem_dim = static_cast<int>(cfg.get_int("semantic_dim", 64));
  g.rhy_dim = width;
  g.max_len = static_cast<int>(cfg.get_int("max_latent_frames", 64));
  g.strategy.kind = fusion_kind_from_name(cfg.get_string("strategy", "additive"));
  g.strategy.t0 = cfg.get_double("t0", 0.2);
  g.cond_drop_prob = cfg.get_double("cond_drop_prob", 0.1);

  PredictorConfig p;
  p.sem_dim = g.sem_dim;
  p.d_model = static_cast<int>(cfg.get_int("pred_d_model", 64));
  p.n_layers = static_cast<int>(cfg.get_int("pred_layers", 2));
  p.n_heads = static_cast<int>(cfg.get_int("pred_heads", 4));
  p.out_dim = width;
  p.max_len = static_cast<int>(cfg.get_int("max_frames", 30));

  mb.gen_cfg = g;
  mb.pred_cfg = p;
  mb.gen = std::make_unique<Generator>(g, mb.reg, rng);
  mb.pred = std::make_unique<Predictor>(p, mb.reg, rng);
  return mb;
}

TrainResult run_training(const Config& user_cfg, const std::string& data_dir,
                         const std::string& ckpt_path,
                         const std::string& csv_path,
                         const std::string& resume_from) {
  Config cfg;
  Checkpoint ck;
  const bool resuming = !resume_from.empty();
  if (resuming) {
    ck = read_checkpoint(resume_from);
    cfg = parse_config_text(ck.config_text);
    // the run may be extended, everything else comes from the snapshot
    if (user_cfg.has("epochs")) cfg.set("epochs", user_cfg.require_string("epochs"));
    check_strategy_byte(ck, cfg);
  } else {
    cfg = resolve_config(user_cfg);
  }

  const uint64_t seed = static_cast<uint64_t>(cfg.get_int("seed", 1234));
  const RhythmKind kind = rhythm_kind_from_name(cfg.get_string("rhythm_repr", "odf"));
  const int semantic_dim = static_cast<int>(cfg.get_int("semantic_dim", 64));

  std::vector<std::string> dirs = list_clip_dirs(data_dir);
  if (dirs.empty())
    throw std::runtime_error("train: no clip directories with frames/ and audio.wav under '" +
                             data_dir + "'");
  std::vector<ClipData> clips = load_clips(dirs, kind, semantic_dim, seed);

  Rng rng(seed);
  ModelBundle mb = build_models(cfg, rng);
  AdamW opt;
  opt.lr = cfg.get_double("lr", 1e-4);
  opt.weight_decay = cfg.get_double("weight_decay", 1e-3);
  opt.init(mb.reg);

  int start_epoch = 0;
  if (resuming) {
    load_checkpoint_state(ck, mb, &opt, &rng);
    start_epoch = static_cast<int>(ck.epoch);
  }

  const int epochs = static_cast<int>(cfg.get_int("epochs", 50));
  const int save_interval = static_cast<int>(cfg.get_int("save_interval", 0));

  auto on_epoch_done = [&](int done) {
    if (!ckpt_path.empty() && save_interval > 0 && done % save_interval == 0 &&
        done < epochs)
      write_checkpoint(ckpt_path, make_checkpoint(cfg, mb, opt, rng, done));
  };

  LoopResult loop = train_loop(cfg, clips, mb, opt, rng, start_epoch, on_epoch_done);

  const int done = std::max(start_epoch, epochs);
  if (!ckpt_path.empty())
    write_checkpoint(ckpt_path, make_checkpoint(cfg, mb, opt, rng, done));

  if (!csv_path.empty()) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"epoch", "ldm_loss", "predictor_loss", "p_pred"});
    for (const EpochRow& r : loop.rows)
      rows.push_back({std::to_string(r.epoch), fmt_double(r.ldm_loss),
                      fmt_double(r.pred_loss), fmt_double(r.p_predicted)});
    write_csv(csv_path, rows);
  }

  TrainResult res;
  res.rows = loop.rows;
  res.clips = static_cast<int>(clips.size());
  res.steps = loop.steps;
  return res;
}

GenerateReport run_generate(const std::string& ckpt_path,
                            const std::string& frames_dir,
                            const std::string& wav_path, int steps,
                            double guidance_scale, uint64_t seed,
                            const std::string& report_path) {
  Checkpoint ck = read_checkpoint(ckpt_path);
  Config cfg = parse_config_text(ck.config_text);
  check_strategy_byte(ck, cfg);

  Rng dummy(0);
  ModelBundle mb = build_models(cfg, dummy);
  load_checkpoint_state(ck, mb, nullptr, nullptr);

  FrameSequence frames = read_frame_dir(frames_dir);
  const int m = frames.seconds();
  const int semantic_dim = static_cast<int>(cfg.get_int("semantic_dim", 64));
  const uint64_t feat_seed = static_cast<uint64_t>(cfg.get_int("seed", 1234));
  VideoFeatures vf = extract_video_features(frames, semantic_dim, feat_seed);
  // keep the feature values identical to what training saw from files
  round_f32(vf.semantic.v);
  round_f32(vf.emotional.v);
  round_f32(vf.beats);

  Tensor emo = Tensor::leaf(Shape{m, kEmotionDim}, vf.emotional.v);
  Tensor sem = Tensor::leaf(Shape{m, semantic_dim}, vf.semantic.v);
  std::vector<int> scene(vf.scene.begin(), vf.scene.end());

  GenCore core = generate_core(mb, emo, sem, scene, vf.beats, m, steps,
                               guidance_scale, seed);
  write_wav(wav_path, core.wav);

  RhythmRepr pred_repr;
  pred_repr.kind = mb.rhythm;
  pred_repr.values = core.rhythm_hat;

  GenerateReport rep;
  rep.seconds = m;
  rep.latent_frames = kLatentFps * m;
  rep.steps = steps;
  rep.guidance_scale = guidance_scale;
  rep.seed = seed;
  rep.align_score = rhythm_alignment_score(core.wav, pred_repr);
  rep.wav_path = wav_path;

  if (!report_path.empty()) {
    Config r;
    r.set("seconds", std::to_string(rep.seconds));
    r.set("latent_frames", std::to_string(rep.latent_frames));
    r.set("steps", std::to_string(rep.steps));
    r.set("guidance_scale", fmt_double(rep.guidance_scale));
    r.set("seed", std::to_string(rep.seed));
    r.set("align_score", fmt_double(rep.align_score));
    r.set("wav_path", rep.wav_path);
    std::ofstream out(report_path);
    if (!out) throw std::runtime_error("report: cannot open '" + report_path + "'");
    out << r.text();
  }
  return rep;
}

void run_compare(const Config& user_cfg, const std::string& data_dir,
                 const std::string& csv_path) {
  Config base = resolve_config(user_cfg);
  base.set("strategy", "additive");

  std::vector<std::string> dirs = list_clip_dirs(data_dir);
  if (dirs.size() < 10)
    throw std::runtime_error("compare: need at least 10 clips, got " +
                             std::to_string(dirs.size()));

  const uint64_t seed = static_cast<uint64_t>(base.get_int("seed", 1234));
  const int semantic_dim = static_cast<int>(base.get_int("semantic_dim", 64));
  const int sample_steps = static_cast<int>(base.get_int("sample_steps", 50));
  const double guidance = base.get_double("guidance_scale", 3.0);

  std::vector<std::vector<std::string>> rows;
  rows.push_back({"repr", "ldm_loss", "pred_loss", "align_score", "train_steps"});

  for (const char* repr : {"mel", "tempogram", "odf"}) {
    Config cfg = base;
    cfg.set("rhythm_repr", repr);
    const RhythmKind kind = rhythm_kind_from_name(repr);

    std::vector<ClipData> clips = load_clips(dirs, kind, semantic_dim, seed);
    Rng rng(seed);
    ModelBundle mb = build_models(cfg, rng);
    AdamW opt;
    opt.lr = cfg.get_double("lr", 1e-4);
    opt.weight_decay = cfg.get_double("weight_decay", 1e-3);
    opt.init(mb.reg);

    LoopResult loop = train_loop(cfg, clips, mb, opt, rng, 0);
    if (loop.rows.empty())
      throw std::runtime_error("compare: config trains zero epochs");

    double align = 0.0;
    for (size_t i = 0; i < clips.size(); ++i) {
      const ClipData& c = clips[i];
      GenCore core = generate_core(mb, c.batch.emo_raw, c.batch.sem_raw,
                                   c.batch.scene, c.batch.curve, c.seconds,
                                   sample_steps, guidance, seed + i);
      RhythmRepr pr;
      pr.kind = kind;
      pr.values = core.rhythm_hat;
      align += rhythm_alignment_score(core.wav, pr);
    }
    align /= static_cast<double>(clips.size());

    const EpochRow& last = loop.rows.back();
    rows.push_back({repr, fmt_double(last.ldm_loss), fmt_double(last.pred_loss),
                    fmt_double(align), std::to_string(loop.steps)});
  }

  write_csv(csv_path, rows);
}

}  // namespace v2m
