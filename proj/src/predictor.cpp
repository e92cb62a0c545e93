#include "v2m/predictor.hpp"

#include <cmath>
#include <string>

namespace v2m {

namespace {

// one sinusoidal row per position, same ladder as sinusoidal_embedding
Tensor positional_rows(int m_rows, int dim) {
  const int half = dim / 2;
  std::vector<double> v(static_cast<size_t>(m_rows) * dim);
  for (int r = 0; r < m_rows; ++r)
    for (int i = 0; i < half; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
      v[static_cast<size_t>(r) * dim + i] = std::sin(r * freq);
      v[static_cast<size_t>(r) * dim + half + i] = std::cos(r * freq);
    }
  return Tensor::leaf({m_rows, dim}, std::move(v));
}

}  // namespace

Predictor::Predictor(const PredictorConfig& cfg, ParamRegistry& reg, Rng& rng)
    : cfg_(cfg) {
  nn_check(cfg.d_model % 2 == 0,
           "predictor: d_model must be even, got " + std::to_string(cfg.d_model));
  proj_ = Linear(reg, "predictor.proj", cfg.sem_dim, cfg.d_model, rng);
  scene_table_ = reg.add("predictor.scene_embed", {2, cfg.d_model}, 0.0, rng);
  curve_in_ = Linear(reg, "predictor.curve", 1, cfg.d_model, rng, /*zero_init=*/true);
  blocks_.resize(cfg.n_layers);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "predictor.block" + std::to_string(l);
    blocks_[l].ln1 = LayerNorm(reg, p + ".ln1", cfg.d_model, rng);
    blocks_[l].attn = Attention(reg, p + ".attn", cfg.d_model, cfg.n_heads, rng,
                                /*causal_mask=*/true);
    blocks_[l].ln2 = LayerNorm(reg, p + ".ln2", cfg.d_model, rng);
    blocks_[l].ffn = Ffn(reg, p + ".ffn", cfg.d_model, 4, rng);
  }
  ln_out_ = LayerNorm(reg, "predictor.ln_out", cfg.d_model, rng);
  head_ = Linear(reg, "predictor.head", cfg.d_model, cfg.out_dim, rng);
}

Tensor Predictor::build_input(const Tensor& sem, const std::vector<int>& scene,
                              const std::vector<double>& curve) const {
  nn_check(sem.shape().size() == 2 && sem.shape()[1] == cfg_.sem_dim,
           "predictor input: semantic rows must be [M x " +
               std::to_string(cfg_.sem_dim) + "], got " + shape_str(sem.shape()));
  const int m = sem.shape()[0];
  nn_check(static_cast<int>(scene.size()) == m,
           "predictor input: " + std::to_string(scene.size()) +
               " scene flags for " + std::to_string(m) + " frames");
  nn_check(static_cast<int>(curve.size()) == m,
           "predictor input: " + std::to_string(curve.size()) +
               " curve values for " + std::to_string(m) + " frames");
  for (int i = 0; i < m; ++i)
    nn_check(scene[i] == 0 || scene[i] == 1,
             "predictor input: scene flag at frame " + std::to_string(i) +
                 " is " + std::to_string(scene[i]) + ", expected 0 or 1");

  Tensor x = proj_(sem);
  x = add(x, embedding_lookup(scene_table_, scene));
  std::vector<double> col(curve.begin(), curve.end());
  x = add(x, curve_in_(Tensor::leaf({m, 1}, std::move(col))));
  return x;
}

Tensor Predictor::predict_rhythm(const Tensor& x) const {
  nn_check(x.shape().size() == 2 && x.shape()[1] == cfg_.d_model,
           "predictor: expected [M x " + std::to_string(cfg_.d_model) +
               "] input, got " + shape_str(x.shape()));
  const int m = x.shape()[0];
  nn_check(m <= cfg_.max_len, "predictor: sequence length " + std::to_string(m) +
                                  " exceeds max_len " +
                                  std::to_string(cfg_.max_len));

  Tensor h = add(x, positional_rows(m, cfg_.d_model));
  for (const Block& blk : blocks_) {
    h = add(h, blk.attn.self(blk.ln1(h)));
    h = add(h, blk.ffn(blk.ln2(h)));
  }
  return sigmoid(head_(ln_out_(h)));
}

Tensor predictor_loss(const Tensor& pred, const Tensor& target) {
  return mse_loss(pred, target);
}

}  // namespace v2m
