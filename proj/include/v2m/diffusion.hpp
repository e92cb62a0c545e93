#pragma once

// Continuous cosine noise schedule, v-objective targets, the scheduled
// conditioning curriculum, a deterministic DDIM sampler with classifier-free
// guidance, and the lossless patch codec that stands in for a learned
// autoencoder.

#include <functional>

#include "v2m/audio.hpp"
#include "v2m/generator.hpp"
#include "v2m/predictor.hpp"

namespace v2m {

// one latent frame covers this many samples; two frames per second
inline constexpr int kLatentWidth = 22050;
inline constexpr int kLatentFps = 2;

struct Schedule {
  double alpha, sigma;
};

// t in [0,1]: alpha = cos(pi t / 2), sigma = sin(pi t / 2)
Schedule schedule(double t);

struct LatentClip {
  Tensor z;  // [T x d_lat]
  double seconds = 0.0;
  int64_t orig_len = 0;  // source samples before padding
  double mean = 0.0;
  double stdev = 1.0;

  double frames_per_second() const {
    return seconds > 0.0 ? z.shape()[0] / seconds : 0.0;
  }
};

LatentClip latent_encode(const Waveform& w, int d_lat = kLatentWidth);
Waveform latent_decode(const LatentClip& clip);

Tensor add_noise(const Tensor& z0, const Tensor& eps, double t);
Tensor v_target(const Tensor& z0, const Tensor& eps, double t);

struct ScheduleParams {
  int e1 = 10;
  int e2 = 30;
};

// probability of feeding the generator its own predicted rhythm
double p_pred(int epoch, const ScheduleParams& sp = {});

Tensor cfg_combine(const Tensor& cond_pred, const Tensor& uncond_pred,
                   double guidance_scale);

using VModel = std::function<Tensor(const Tensor& z_t, double t)>;

// eta = 0 sampler over a uniform t grid from 1 to 0; returns the final
// clean-latent estimate [t_rows x d_lat]
Tensor ddim_sample(const VModel& cond_v, const VModel& uncond_v, int t_rows,
                   int d_lat, int steps, double guidance_scale, uint64_t seed);

struct TrainBatch {
  Tensor emo_raw;   // [M_e x emo_dim]
  Tensor sem_raw;   // [M x sem_dim]
  Tensor rhy_gt;    // [M x rhy_dim] ground-truth rhythm representation
  std::vector<int> scene;
  std::vector<double> curve;
  Tensor z0;        // [T x d_lat] encoded latent clip
  double g_start = 0.0;
  double g_dur = 0.0;
};

struct StepStats {
  double ldm_loss = 0.0;
  double pred_loss = 0.0;
  double p_predicted = 0.0;
  bool used_predicted = false;
};

// one joint optimization step; the predicted-rhythm path stays connected to
// the diffusion loss so both models co-adapt
StepStats training_step(const Generator& gen, const Predictor& pred,
                        ParamRegistry& reg, AdamW& opt, const TrainBatch& batch,
                        int epoch, Rng& rng, const ScheduleParams& sp = {},
                        double lambda = 1.0);

}  // namespace v2m
