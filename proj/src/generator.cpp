#include "v2m/generator.hpp"

#include <cmath>

namespace v2m {

const char* fusion_kind_name(FusionKind kind) {
  switch (kind) {
    case FusionKind::Weighted: return "weighted";
    case FusionKind::Additive: return "additive";
    case FusionKind::FeatureSelection: return "feature_selection";
    case FusionKind::PreAttnFiLM: return "pre_attn_film";
    case FusionKind::PostAttnFiLM: return "post_attn_film";
    case FusionKind::PostAttnFiLMwithFS: return "post_attn_film_fs";
  }
  throw std::runtime_error("unknown fusion kind code " +
                           std::to_string(static_cast<int>(kind)));
}

FusionKind fusion_kind_from_name(const std::string& name) {
  for (uint8_t c = 0; c < 6; ++c) {
    const FusionKind k = static_cast<FusionKind>(c);
    if (name == fusion_kind_name(k)) return k;
  }
  throw std::runtime_error("unknown fusion strategy '" + name + "'");
}

FusionKind fusion_kind_from_code(uint8_t code) {
  if (code > 5)
    throw std::runtime_error("unknown fusion kind code " + std::to_string(code));
  return static_cast<FusionKind>(code);
}

Generator::Generator(const GeneratorConfig& cfg, ParamRegistry& reg, Rng& rng)
    : cfg_(cfg) {
  nn_check(cfg.d_model % 4 == 0 && cfg.d_model > 0,
           "generator: d_model must be a positive multiple of 4, got " +
               std::to_string(cfg.d_model));
  nn_check(cfg.d_model % cfg.n_heads == 0,
           "generator: d_model " + std::to_string(cfg.d_model) +
               " not divisible by " + std::to_string(cfg.n_heads) + " heads");
  nn_check(cfg.n_blocks >= 1,
           "generator: need at least one block, got " + std::to_string(cfg.n_blocks));
  nn_check(cfg.cond_drop_prob >= 0.0 && cfg.cond_drop_prob <= 0.5,
           "generator: cond_drop_prob " + std::to_string(cfg.cond_drop_prob) +
               " outside [0, 0.5]");
  nn_check(cfg.strategy.t0 > 0.0 && cfg.strategy.t0 < 1.0,
           "generator: t0 " + std::to_string(cfg.strategy.t0) +
               " outside (0, 1)");

  const int d = cfg.d_model;
  const double tok_std = 1.0 / std::sqrt(static_cast<double>(d));
  enc_emo_ = Linear(reg, "gen.enc_emo", cfg.emo_dim, d, rng);
  enc_sem_ = Linear(reg, "gen.enc_sem", cfg.sem_dim, d, rng);
  enc_rhy_ = Linear(reg, "gen.enc_rhy", cfg.rhy_dim, d, rng);
  null_emo_ = reg.add("gen.null_emo", {1, d}, tok_std, rng);
  null_sem_ = reg.add("gen.null_sem", {1, d}, tok_std, rng);
  null_rhy_ = reg.add("gen.null_rhy", {1, d}, tok_std, rng);
  global1_ = Linear(reg, "gen.global.l1", d, d, rng);
  global2_ = Linear(reg, "gen.global.l2", d, d, rng, /*zero_init=*/true);
  in_proj_ = Linear(reg, "gen.in_proj", cfg.d_lat, d, rng);

  blocks_.resize(cfg.n_blocks);
  for (int b = 0; b < cfg.n_blocks; ++b) {
    const std::string p = "gen.block" + std::to_string(b);
    Block& blk = blocks_[b];
    blk.ln_self = LayerNorm(reg, p + ".ln_self", d, rng);
    blk.attn_self = Attention(reg, p + ".attn_self", d, cfg.n_heads, rng,
                              /*causal_mask=*/false, /*use_rope=*/true);
    blk.ln_emo = LayerNorm(reg, p + ".ln_emo", d, rng);
    blk.attn_emo = Attention(reg, p + ".attn_emo", d, cfg.n_heads, rng);
    blk.ln_par = LayerNorm(reg, p + ".ln_par", d, rng);
    blk.attn_sem = Attention(reg, p + ".attn_sem", d, cfg.n_heads, rng);
    blk.attn_rhy = Attention(reg, p + ".attn_rhy", d, cfg.n_heads, rng);
    blk.ln_ffn = LayerNorm(reg, p + ".ln_ffn", d, rng);
    blk.ffn = Ffn(reg, p + ".ffn", d, cfg.ffn_mult, rng);
    // strategy parameters exist for every instance so that the init stream
    // does not depend on the configured strategy
    blk.gate1 = Linear(reg, p + ".gate.l1", d, d, rng);
    blk.gate2 = Linear(reg, p + ".gate.l2", d, 1, rng, /*zero_init=*/true);
    blk.film_sem.gamma1 = Linear(reg, p + ".film_sem.gamma1", d, d, rng);
    blk.film_sem.gamma2 = Linear(reg, p + ".film_sem.gamma2", d, d, rng, true);
    blk.film_sem.beta1 = Linear(reg, p + ".film_sem.beta1", d, d, rng);
    blk.film_sem.beta2 = Linear(reg, p + ".film_sem.beta2", d, d, rng, true);
    blk.film_rhy.gamma1 = Linear(reg, p + ".film_rhy.gamma1", d, d, rng);
    blk.film_rhy.gamma2 = Linear(reg, p + ".film_rhy.gamma2", d, d, rng, true);
    blk.film_rhy.beta1 = Linear(reg, p + ".film_rhy.beta1", d, d, rng);
    blk.film_rhy.beta2 = Linear(reg, p + ".film_rhy.beta2", d, d, rng, true);
  }
  ln_out_ = LayerNorm(reg, "gen.ln_out", d, rng);
  out_proj_ = Linear(reg, "gen.out_proj", d, cfg.d_lat, rng, /*zero_init=*/true);
}

Tensor Generator::global_embedding(double g_start, double g_dur, double t) const {
  nn_check(g_start >= 0.0,
           "global embedding: negative start " + std::to_string(g_start));
  nn_check(g_dur > 0.0,
           "global embedding: duration " + std::to_string(g_dur) +
               " is not positive");
  const int d = cfg_.d_model;
  Tensor meta = concat({sinusoidal_embedding(g_start, d / 2),
                        sinusoidal_embedding(g_dur, d / 2)},
                       1);
  Tensor x = add(meta, timestep_embedding(t, d));
  return global2_(gelu(global1_(x)));
}

namespace {

void check_stream(const Tensor& s, const char* name, int d_model) {
  nn_check(s.shape().size() == 2 && s.shape()[1] == d_model && s.shape()[0] >= 1,
           std::string("condition set: ") + name + " must be [rows x " +
               std::to_string(d_model) + "], got " + shape_str(s.shape()));
}

void check_conditions(const ConditionSet& cond, int d_model) {
  check_stream(cond.emo, "emo", d_model);
  check_stream(cond.sem, "sem", d_model);
  check_stream(cond.rhy, "rhy", d_model);
  nn_check(cond.global_token.shape() == Shape{1, d_model},
           "condition set: global token must be [1 x " + std::to_string(d_model) +
               "], got " + shape_str(cond.global_token.shape()));
}

void check_raw(const Tensor& r, const char* name, int width) {
  nn_check(r.shape().size() == 2 && r.shape()[1] == width && r.shape()[0] >= 1,
           std::string("raw features: ") + name + " must be [rows x " +
               std::to_string(width) + "], got " + shape_str(r.shape()));
}

}  // namespace

ConditionSet Generator::encode_conditions(const Tensor& emo_raw,
                                          const Tensor& sem_raw,
                                          const Tensor& rhy_raw, double t,
                                          double g_start, double g_dur) const {
  check_raw(emo_raw, "emo", cfg_.emo_dim);
  check_raw(sem_raw, "sem", cfg_.sem_dim);
  check_raw(rhy_raw, "rhy", cfg_.rhy_dim);
  ConditionSet cond;
  cond.emo = enc_emo_(emo_raw);
  cond.sem = enc_sem_(sem_raw);
  cond.rhy = enc_rhy_(rhy_raw);
  cond.global_token = global_embedding(g_start, g_dur, t);
  return cond;
}

ConditionSet Generator::null_conditions(double t, double g_start,
                                        double g_dur) const {
  ConditionSet cond;
  cond.emo = null_emo_;
  cond.sem = null_sem_;
  cond.rhy = null_rhy_;
  cond.global_token = global_embedding(g_start, g_dur, t);
  return cond;
}

const Generator::FilmMlp& Generator::film_mlp(FilmBranch branch, int block) const {
  nn_check(block >= 0 && block < static_cast<int>(blocks_.size()),
           "generator: block index " + std::to_string(block) + " out of range");
  return branch == FilmBranch::Sem ? blocks_[block].film_sem
                                   : blocks_[block].film_rhy;
}

Tensor Generator::film_modulate(const Tensor& h, double t, FilmBranch branch,
                                int block) const {
  nn_check(h.shape().size() == 2 && h.shape()[1] == cfg_.d_model,
           "film: expected [rows x " + std::to_string(cfg_.d_model) +
               "], got " + shape_str(h.shape()));
  const FilmMlp& mlp = film_mlp(branch, block);
  Tensor t_emb = timestep_embedding(t, cfg_.d_model);
  Tensor gamma = add(mlp.gamma2(gelu(mlp.gamma1(t_emb))),
                     Tensor::full({1, cfg_.d_model}, 1.0));
  Tensor beta = mlp.beta2(gelu(mlp.beta1(t_emb)));
  return broadcast_add(mul(h, tile_rows(gamma, h.shape()[0])), beta);
}

Tensor Generator::gate_alpha(double t, int block) const {
  const Block& blk = blocks_[block];
  Tensor t_emb = timestep_embedding(t, cfg_.d_model);
  return sigmoid(blk.gate2(gelu(blk.gate1(t_emb))));
}

Tensor Generator::fuse(const Tensor& h_sem, const Tensor& h_rhy, double t,
                       int block) const {
  nn_check(h_sem.shape() == h_rhy.shape(),
           "fuse: branch shapes " + shape_str(h_sem.shape()) + " vs " +
               shape_str(h_rhy.shape()) + " differ");
  nn_check(t >= 0.0 && t <= 1.0,
           "fuse: timestep " + std::to_string(t) + " outside [0, 1]");
  nn_check(block >= 0 && block < static_cast<int>(blocks_.size()),
           "generator: block index " + std::to_string(block) + " out of range");
  const int rows = h_sem.shape()[0];
  const int d = h_sem.shape()[1];

  switch (cfg_.strategy.kind) {
    case FusionKind::Weighted: {
      Tensor alpha = gate_alpha(t, block);
      Tensor rest = sub(Tensor::full({1, 1}, 1.0), alpha);
      return add(mul(h_sem, tile_scalar(alpha, rows, d)),
                 mul(h_rhy, tile_scalar(rest, rows, d)));
    }
    case FusionKind::Additive:
    case FusionKind::PreAttnFiLM:
    case FusionKind::PostAttnFiLM:
      return add(scale(h_sem, 0.5), scale(h_rhy, 0.5));
    case FusionKind::FeatureSelection:
    case FusionKind::PostAttnFiLMwithFS:
      return t > cfg_.strategy.t0 ? h_sem : h_rhy;
  }
  throw std::runtime_error("unknown fusion kind");
}

Tensor Generator::block_forward(const Tensor& h, const ConditionSet& cond,
                                double t, int block) const {
  nn_check(block >= 0 && block < static_cast<int>(blocks_.size()),
           "generator: block index " + std::to_string(block) + " out of range");
  const Block& blk = blocks_[block];
  const FusionKind kind = cfg_.strategy.kind;

  Tensor h_self = add(h, blk.attn_self.self(blk.ln_self(h)));
  Tensor h_emo = add(h_self, blk.attn_emo(blk.ln_emo(h_self), cond.emo));

  Tensor mem_sem = cond.sem;
  Tensor mem_rhy = cond.rhy;
  if (kind == FusionKind::PreAttnFiLM) {
    mem_sem = film_modulate(mem_sem, t, FilmBranch::Sem, block);
    mem_rhy = film_modulate(mem_rhy, t, FilmBranch::Rhy, block);
  }

  Tensor q_par = blk.ln_par(h_emo);
  Tensor h_sem = blk.attn_sem(q_par, mem_sem);
  Tensor h_rhy = blk.attn_rhy(q_par, mem_rhy);
  if (kind == FusionKind::PostAttnFiLM || kind == FusionKind::PostAttnFiLMwithFS) {
    h_sem = film_modulate(h_sem, t, FilmBranch::Sem, block);
    h_rhy = film_modulate(h_rhy, t, FilmBranch::Rhy, block);
  }

  Tensor fused = fuse(h_sem, h_rhy, t, block);
  return add(h_emo, blk.ffn(blk.ln_ffn(fused)));
}

Tensor Generator::forward(const Tensor& z_t, const ConditionSet& cond,
                          double t) const {
  nn_check(z_t.shape().size() == 2 && z_t.shape()[1] == cfg_.d_lat,
           "generator: latent must be [T x " + std::to_string(cfg_.d_lat) +
               "], got " + shape_str(z_t.shape()));
  const int rows = z_t.shape()[0];
  nn_check(rows >= 1, "generator: empty latent sequence");
  nn_check(rows <= cfg_.max_len,
           "generator: sequence length " + std::to_string(rows) +
               " exceeds max " + std::to_string(cfg_.max_len));
  nn_check(t >= 0.0 && t <= 1.0,
           "generator: timestep " + std::to_string(t) + " outside [0, 1]");
  check_conditions(cond, cfg_.d_model);

  Tensor h = concat({cond.global_token, in_proj_(z_t)}, 0);
  for (int b = 0; b < cfg_.n_blocks; ++b) h = block_forward(h, cond, t, b);
  h = slice(h, 0, 1, rows);
  return out_proj_(ln_out_(h));
}

}  // namespace v2m
