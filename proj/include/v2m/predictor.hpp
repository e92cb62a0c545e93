#pragma once

// Causal transformer that maps per-frame visual features to a rhythm
// representation in [0,1]. Scene-change flags and the visual rhythm curve
// enter through zero-initialized embeddings, so a fresh predictor sees only
// the projected semantic rows.

#include <vector>

#include "v2m/nn.hpp"

namespace v2m {

struct PredictorConfig {
  int sem_dim = 64;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int out_dim = 1;
  int max_len = 30;
};

class Predictor {
 public:
  Predictor(const PredictorConfig& cfg, ParamRegistry& reg, Rng& rng);

  // sem [M x sem_dim], scene flags of 0/1 per frame, curve one value per frame
  Tensor build_input(const Tensor& sem, const std::vector<int>& scene,
                     const std::vector<double>& curve) const;

  // adds positional rows, runs the causal stack, maps to [M x out_dim]
  Tensor predict_rhythm(const Tensor& x) const;

  Tensor operator()(const Tensor& sem, const std::vector<int>& scene,
                    const std::vector<double>& curve) const {
    return predict_rhythm(build_input(sem, scene, curve));
  }

  const PredictorConfig& config() const { return cfg_; }

 private:
  struct Block {
    LayerNorm ln1;
    Attention attn;
    LayerNorm ln2;
    Ffn ffn;
  };

  PredictorConfig cfg_;
  Linear proj_;
  Tensor scene_table_;
  Linear curve_in_;
  std::vector<Block> blocks_;
  LayerNorm ln_out_;
  Linear head_;
};

Tensor predictor_loss(const Tensor& pred, const Tensor& target);

}  // namespace v2m
