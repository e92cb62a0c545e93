#include "v2m/diffusion.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace v2m {

Schedule schedule(double t) {
  if (!(t >= 0.0 && t <= 1.0))
    throw std::runtime_error("schedule: t = " + std::to_string(t) +
                             " outside [0, 1]");
  const double a = std::numbers::pi * t / 2.0;
  return {std::cos(a), std::sin(a)};
}

LatentClip latent_encode(const Waveform& w, int d_lat) {
  if (w.samples.empty()) throw std::runtime_error("latent encode: empty audio");
  if (d_lat < 1)
    throw std::runtime_error("latent encode: latent width " +
                             std::to_string(d_lat) + " must be positive");
  const int64_t n = static_cast<int64_t>(w.samples.size());
  const int64_t t_rows = (n + d_lat - 1) / d_lat;

  double mean = 0.0;
  for (double x : w.samples) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : w.samples) var += (x - mean) * (x - mean);
  const double stdev = std::sqrt(var / static_cast<double>(n));

  LatentClip clip;
  clip.seconds = w.seconds();
  clip.orig_len = n;
  std::vector<double> z(static_cast<size_t>(t_rows) * d_lat, 0.0);
  if (stdev < 1e-12) {
    // degenerate clip: pass through unscaled so silence stays exactly zero
    clip.mean = 0.0;
    clip.stdev = 1.0;
    for (int64_t i = 0; i < n; ++i) z[i] = w.samples[i];
  } else {
    clip.mean = mean;
    clip.stdev = stdev;
    for (int64_t i = 0; i < n; ++i) z[i] = (w.samples[i] - mean) / stdev;
  }
  clip.z = Tensor::leaf({static_cast<int>(t_rows), d_lat}, std::move(z));
  return clip;
}

Waveform latent_decode(const LatentClip& clip) {
  const int64_t n_padded = clip.z.numel();
  const int64_t n = clip.orig_len > 0 ? clip.orig_len : n_padded;
  if (n > n_padded)
    throw std::runtime_error("latent decode: source length " +
                             std::to_string(n) + " exceeds latent capacity " +
                             std::to_string(n_padded));
  Waveform w;
  w.samples.resize(n);
  const std::vector<double>& z = clip.z.data();
  for (int64_t i = 0; i < n; ++i) w.samples[i] = z[i] * clip.stdev + clip.mean;
  return w;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::runtime_error(std::string(op) + ": shapes " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()) + " differ");
}

}  // namespace

Tensor add_noise(const Tensor& z0, const Tensor& eps, double t) {
  check_same_shape(z0, eps, "add_noise");
  const Schedule s = schedule(t);
  return add(scale(z0, s.alpha), scale(eps, s.sigma));
}

Tensor v_target(const Tensor& z0, const Tensor& eps, double t) {
  check_same_shape(z0, eps, "v_target");
  const Schedule s = schedule(t);
  return sub(scale(eps, s.alpha), scale(z0, s.sigma));
}

double p_pred(int epoch, const ScheduleParams& sp) {
  if (!(sp.e1 >= 0 && sp.e1 < sp.e2))
    throw std::runtime_error("schedule params: need 0 <= e1 < e2, got e1=" +
                             std::to_string(sp.e1) + " e2=" +
                             std::to_string(sp.e2));
  if (epoch < 0)
    throw std::runtime_error("schedule params: negative epoch " +
                             std::to_string(epoch));
  if (epoch < sp.e1) return 0.0;
  if (epoch >= sp.e2) return 1.0;
  return static_cast<double>(epoch - sp.e1) / static_cast<double>(sp.e2 - sp.e1);
}

Tensor cfg_combine(const Tensor& cond_pred, const Tensor& uncond_pred,
                   double guidance_scale) {
  check_same_shape(cond_pred, uncond_pred, "cfg_combine");
  return add(uncond_pred, scale(sub(cond_pred, uncond_pred), guidance_scale));
}

Tensor ddim_sample(const VModel& cond_v, const VModel& uncond_v, int t_rows,
                   int d_lat, int steps, double guidance_scale, uint64_t seed) {
  if (steps < 1)
    throw std::runtime_error("ddim: steps must be >= 1, got " +
                             std::to_string(steps));
  if (t_rows < 1 || d_lat < 1)
    throw std::runtime_error("ddim: invalid latent shape [" +
                             std::to_string(t_rows) + " x " +
                             std::to_string(d_lat) + "]");

  Rng rng(seed);
  std::vector<double> init(static_cast<size_t>(t_rows) * d_lat);
  for (double& x : init) x = rng.gaussian();
  Tensor z = Tensor::leaf({t_rows, d_lat}, std::move(init));

  for (int i = 0; i < steps; ++i) {
    const double t = 1.0 - static_cast<double>(i) / steps;
    const double t_next = 1.0 - static_cast<double>(i + 1) / steps;
    const Schedule s = schedule(t);
    const Schedule s_next = schedule(t_next);

    Tensor v_hat = cfg_combine(cond_v(z, t), uncond_v(z, t), guidance_scale);
    check_same_shape(v_hat, z, "ddim model output");
    Tensor z0_hat = sub(scale(z, s.alpha), scale(v_hat, s.sigma));
    Tensor eps_hat = add(scale(z, s.sigma), scale(v_hat, s.alpha));
    z = add(scale(z0_hat, s_next.alpha), scale(eps_hat, s_next.sigma));
    z = Tensor::leaf(z.shape(), std::vector<double>(z.data()));
  }
  return z;
}

StepStats training_step(const Generator& gen, const Predictor& pred,
                        ParamRegistry& reg, AdamW& opt, const TrainBatch& batch,
                        int epoch, Rng& rng, const ScheduleParams& sp,
                        double lambda) {
  StepStats stats;
  stats.p_predicted = p_pred(epoch, sp);

  // fixed draw order keeps resumed runs on the identical stream:
  // rhythm-source coin, timestep, noise, conditioning-drop coin
  stats.used_predicted = rng.bernoulli(stats.p_predicted);
  const double t = 1e-4 + (1.0 - 1e-4) * rng.uniform();
  std::vector<double> noise(batch.z0.numel());
  for (double& x : noise) x = rng.gaussian();
  const bool drop = rng.bernoulli(gen.config().cond_drop_prob);

  Tensor eps = Tensor::leaf(batch.z0.shape(), std::move(noise));
  Tensor z_t = add_noise(batch.z0, eps, t);
  Tensor target = v_target(batch.z0, eps, t);

  Tensor rhythm_hat = pred(batch.sem_raw, batch.scene, batch.curve);
  Tensor rhythm_in = stats.used_predicted ? rhythm_hat : batch.rhy_gt;

  ConditionSet cond =
      drop ? gen.null_conditions(t, batch.g_start, batch.g_dur)
           : gen.encode_conditions(batch.emo_raw, batch.sem_raw, rhythm_in, t,
                                   batch.g_start, batch.g_dur);
  Tensor v_hat = gen.forward(z_t, cond, t);

  Tensor ldm = mse_loss(v_hat, target);
  Tensor ploss = predictor_loss(rhythm_hat, batch.rhy_gt);
  Tensor total = add(ldm, scale(ploss, lambda));

  reg.zero_grad();
  backward(total);
  opt.update(reg);

  stats.ldm_loss = ldm.data()[0];
  stats.pred_loss = ploss.data()[0];
  return stats;
}

}  // namespace v2m
