#pragma once

// End-to-end plumbing: feature extraction from clip directories, the joint
// training loop with checkpointing and loss logs, guided sampling to WAV,
// and the three-way rhythm representation comparison.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "v2m/audio.hpp"
#include "v2m/diffusion.hpp"
#include "v2m/formats.hpp"
#include "v2m/generator.hpp"
#include "v2m/predictor.hpp"
#include "v2m/synthetic.hpp"
#include "v2m/visual.hpp"

namespace v2m {

// sections {semantic, emotional, scene, beats, rhythm_gt}; every value is
// rounded through f32 so in-memory features match a file round trip
FeatureFile extract_features(const std::string& frames_dir,
                             const std::string& audio_path, RhythmKind kind,
                             int semantic_dim = kSemanticDim,
                             uint64_t seed = 1234);

// Pearson correlation between the audio's per-second onset profile and a
// conditioning signal; multi-column representations are reduced to one
// value per second first; returns 0 when either side is constant
double rhythm_alignment_score(const Waveform& w, const RhythmRepr& cond);

// materializes dir/frames and dir/audio.wav
void write_synthetic_clip(const SyntheticPair& pair, const std::string& dir);

Config default_train_config();

struct ModelBundle {
  ParamRegistry reg;
  GeneratorConfig gen_cfg;
  PredictorConfig pred_cfg;
  RhythmKind rhythm = RhythmKind::OdfLR;
  std::unique_ptr<Generator> gen;
  std::unique_ptr<Predictor> pred;
};

// builds generator then predictor from config keys, drawing all initial
// weights from rng in one fixed order
ModelBundle build_models(const Config& cfg, Rng& rng);

struct EpochRow {
  int epoch = 0;
  double ldm_loss = 0.0;
  double pred_loss = 0.0;
  double p_predicted = 0.0;
};

struct TrainResult {
  std::vector<EpochRow> rows;  // one per epoch trained in this call
  int clips = 0;
  uint64_t steps = 0;          // optimizer steps taken in this call
};

// trains on every clip directory under data_dir (sorted); writes a rolling
// checkpoint and a per-epoch CSV; resume_from continues a saved run up to
// the configured epoch count
TrainResult run_training(const Config& cfg, const std::string& data_dir,
                         const std::string& ckpt_path,
                         const std::string& csv_path,
                         const std::string& resume_from = "");

struct GenerateReport {
  int seconds = 0;
  int latent_frames = 0;
  int steps = 0;
  double guidance_scale = 0.0;
  uint64_t seed = 0;
  double align_score = 0.0;
  std::string wav_path;
};

GenerateReport run_generate(const std::string& ckpt_path,
                            const std::string& frames_dir,
                            const std::string& wav_path, int steps,
                            double guidance_scale, uint64_t seed,
                            const std::string& report_path = "");

// trains one model per rhythm representation under identical seeds and
// step budgets, then writes one CSV row per representation with columns
// {repr, ldm_loss, pred_loss, align_score, train_steps}
void run_compare(const Config& cfg, const std::string& data_dir,
                 const std::string& csv_path);

}  // namespace v2m
